#pragma once

namespace crowdlabel {

// Regularized lower / upper incomplete gamma, a > 0, x >= 0.
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

// Regularized incomplete beta I_x(a, b), a, b > 0, 0 <= x <= 1.
double regularized_beta(double a, double b, double x);

// Upper tail of the chi-square distribution.
double chi_square_sf(double statistic, double dof);

// Two-sided p-value of Student's t.
double student_t_two_sided(double t, double dof);

}  // namespace crowdlabel
