#!/usr/bin/env python3
"""Regenerates the bundled fixture under data/fixture/.

The output is deterministic: running the script twice yields identical files.
"""

import json
import random
import re
from datetime import datetime, timedelta, timezone
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "fixture"
N_POSTS = 200
N_WORKERS = 12
BATCH = 25

TRIGGERS = {
    "Conspiracy": ["rigged", "stolen election", "cover up", "deep state", "secret plot"],
    "Sensationalism": ["shocking", "breaking", "you won't believe", "disaster", "outrageous"],
    "HateSpeech": ["traitor", "scum", "vermin", "lowlife"],
    "Speculation": ["rumor", "reportedly", "allegedly", "sources say", "insiders claim"],
    "Satire": ["lol", "satire", "parody", "totally serious"],
}
PREVALENCE = {"Conspiracy": 0.22, "Sensationalism": 0.28, "HateSpeech": 0.10, "Speculation": 0.30, "Satire": 0.08}

FILLER = (
    "voters turnout ballots county polls debate candidate campaign senate governor rally policy economy "
    "inflation healthcare border immigration climate taxes jobs swing state early voting mail results "
    "precinct coverage interview speech primary delegates margin survey district mayor congress court "
    "registration deadline volunteers donors ads message town hall endorsement turnout youth seniors"
).split()
OPENERS = ["Today", "Tonight", "This morning", "Again", "Honestly", "Update", "Meanwhile", "So", "Look", "Wow"]
HASHTAGS = ["#Election2024", "#Vote", "#Debate", "#Politics", "#USA"]
LOCATIONS = ["Ohio", "Texas, USA", "NYC", "California", None, "Atlanta, GA", "Phoenix", None]

BACKENDS = [
    ("gpt-4o", 0.04, 0.00, {}),
    ("gpt-4o-mini", 0.07, 0.01, {}),
    ("gemini-2.0-flash", 0.05, 0.00, {}),
    ("gemini-1.5-flash", 0.09, 0.02, {}),
    ("llama-3.1-70b", 0.08, 0.00, {"HateSpeech": 0.04}),
    ("llama-3.1-8b", 0.12, 0.03, {}),
]

DEMOGRAPHICS = [
    # age, gender, income, area, ideology, affiliation, education, ai_experience
    ("35–44 years", "Male", "$50k–$75k", "Rural", "Very Liberal", "Democrat", "Bachelor's Degree", "Strongly Disagree"),
    ("45–54 years", "Female", "$20k–$30k", "Suburban", "Liberal", "Democrat", "Some College", "Strongly Disagree"),
    ("25–34 years", "Male", "Less than $20k", "Urban", "Liberal", "Independent", "Bachelor's Degree", "Somewhat Disagree"),
    ("55+ years", "Male", "$75k–$100k", "Rural", "Centrist", "Independent", "High School / GED", "Strongly Disagree"),
    ("35–44 years", "Female", "$100k–$150k", "Metropolitan", "Centrist", "Independent", "Master's Degree", "Neutral"),
    ("45–54 years", "Male", "$30k–$40k", "Suburban", "Conservative", "Republican", "Some College", "Strongly Disagree"),
    ("35–44 years", "Male", "$50k–$75k", "Rural", "Very Conservative", "Republican", "High School / GED", "Somewhat Agree"),
    ("45–54 years", "Female", "$40k–$50k", "Urban", "Liberal", "Democrat", "Bachelor's Degree", "Strongly Agree"),
    ("55+ years", "Male", "More than $150k", "Suburban", "Conservative", "Independent", "Doctorate or Higher", "Strongly Disagree"),
    ("35–44 years", "Male", "$50k–$75k", "Metropolitan", "Centrist", "Other: Socialist", "Bachelor's Degree", "Strongly Disagree"),
    ("25–34 years", "Female", "$20k–$30k", "Rural", "Prefer not to say", "Democrat", "Some College", "Somewhat Disagree"),
    ("45–54 years", "Male", "Less than $20k", "Suburban", "Very Liberal", "Independent", "Bachelor's Degree", "Strongly Agree"),
]
IDEOLOGY_SHIFT = {"Very Liberal": -2, "Liberal": -1, "Centrist": 0, "Conservative": 1, "Very Conservative": 2}


def normalized(text):
    return " ".join(re.sub(r"[^\w\s']", "", text.lower()).split())


def make_post_text(rng, cats):
    words = [rng.choice(OPENERS)]
    body = rng.sample(FILLER, rng.randint(6, 12))
    for c in cats:
        body.insert(rng.randrange(len(body) + 1), rng.choice(TRIGGERS[c]))
    words += body
    text = " ".join(words)
    if rng.random() < 0.4:
        text += " " + rng.choice(HASHTAGS)
    if rng.random() < 0.3:
        text = "@" + rng.choice(["newsdesk", "pollwatch", "citizen42"]) + " " + text
    if rng.random() < 0.3:
        text += " https://t.co/" + "".join(rng.choice("abcdefghijk0123456789") for _ in range(8))
    if rng.random() < 0.5:
        text += rng.choice(["!", "!!!", "?", ".", " :)"])
    return text


def main():
    rng = random.Random(2024)
    OUT.mkdir(parents=True, exist_ok=True)
    start = datetime(2024, 10, 1, tzinfo=timezone.utc)

    posts, seen = [], set()
    while len(posts) < N_POSTS:
        cats = [c for c in TRIGGERS if rng.random() < PREVALENCE[c]]
        text = make_post_text(rng, cats)
        key = normalized(re.sub(r"https?://\S+|@\w+|#", " ", text))
        if key in seen:
            continue
        seen.add(key)
        posts.append(text)

    records = []
    for i, text in enumerate(posts):
        ts = start + timedelta(minutes=rng.randrange(60 * 24 * 40), milliseconds=rng.randrange(1000))
        rec = {
            "id": f"p{i + 1:04d}",
            "text": text,
            "created_at": ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z",
            "author_id": f"u{rng.randrange(150):03d}",
            "public_metrics": {
                "retweet_count": rng.randrange(0, 50),
                "like_count": rng.randrange(0, 400),
                "impression_count": rng.randrange(10, 20000),
            },
            "possibly_sensitive": rng.random() < 0.05,
            "verified": rng.random() < 0.10,
        }
        loc = rng.choice(LOCATIONS)
        if loc is not None:
            rec["user_location"] = loc
        records.append(rec)

    # Noise the cleaner must remove: re-punctuated duplicates and short posts.
    noise = []
    for j in range(10):
        src = records[rng.randrange(len(records))]
        dup = dict(src)
        dup["id"] = f"d{j + 1:03d}"
        dup["text"] = src["text"].upper() + " !!"
        noise.append(dup)
    for j, text in enumerate(["Vote today!", "So rigged lol", "@someone https://t.co/x #Vote", "four words only here",
                              "Breaking news tonight", "ok", "Big rally #Election2024", "polls close soon"]):
        noise.append({"id": f"s{j + 1:03d}", "text": text, "created_at": "2024-11-05T12:00:00.000Z"})
    all_lines = records + noise
    rng.shuffle(all_lines)
    with open(OUT / "posts.jsonl", "w", encoding="utf-8") as f:
        for rec in all_lines:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
        f.write("{not valid json\n")

    roster = [
        {
            "name": name,
            "endpoint_url": "https://api.example.invalid/v1/chat/completions",
            "model_id": name,
            "temperature": 0,
            "max_retries": 3,
            "max_in_flight": 4,
            "requests_per_minute": 60000,
            "auth_env_var": "LLM_API_KEY",
            "retry_backoff_ms": 1,
        }
        for name, *_ in BACKENDS
    ]
    with open(OUT / "backends.json", "w", encoding="utf-8") as f:
        json.dump({"backends": roster}, f, indent=2)
        f.write("\n")

    mock = {"rules": TRIGGERS, "backends": {}}
    for name, flip, malformed, omit in BACKENDS:
        entry = {"flip_rate": flip, "malformed_rate": malformed}
        if omit:
            entry["omit_rate"] = omit
        mock["backends"][name] = entry
    with open(OUT / "mock_rules.json", "w", encoding="utf-8") as f:
        json.dump(mock, f, indent=2)
        f.write("\n")

    # Human assignments: batches of 25 posts, each batch labeled by 3 workers.
    fields = ["age", "gender", "income", "area", "ideology", "affiliation", "education", "ai_experience"]
    workers = [f"w{k + 1:02d}" for k in range(N_WORKERS)]
    demo = {w: dict(zip(fields, DEMOGRAPHICS[k])) for k, w in enumerate(workers)}
    noise_rate = {w: 0.06 + 0.02 * (k % 5) for k, w in enumerate(workers)}
    lowered = {c: [t.lower() for t in ts] for c, ts in TRIGGERS.items()}

    assignments, groups = [], []
    for b in range(N_POSTS // BATCH):
        batch = records[b * BATCH:(b + 1) * BATCH]
        crew = rng.sample(workers, 3)
        groups.append({"name": f"batch-{b + 1}", "units": [r["id"] for r in batch], "raters": crew})
        for rec in batch:
            text = rec["text"].lower()
            for w in crew:
                shift = IDEOLOGY_SHIFT.get(demo[w]["ideology"], 0)
                row = {"post_id": rec["id"], "worker_id": w, "demographics": demo[w]}
                for c, ts in lowered.items():
                    truth = any(t in text for t in ts)
                    v = truth if rng.random() >= noise_rate[w] else not truth
                    if c == "HateSpeech" and not v and rng.random() < 0.05 * max(shift, 0):
                        v = True
                    if c == "Speculation" and v and rng.random() < 0.08 * max(shift, 0):
                        v = False
                    row[c] = v
                if rng.random() < 0.01:
                    row["Satire"] = None
                assignments.append(row)
    with open(OUT / "assignments.jsonl", "w", encoding="utf-8") as f:
        for row in assignments:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    with open(OUT / "groups.jsonl", "w", encoding="utf-8") as f:
        for g in groups:
            f.write(json.dumps(g) + "\n")

    (OUT / "pipeline.conf").write_text(
        "# Offline end-to-end run over the bundled fixture.\n"
        "corpus = posts.jsonl\n"
        "backends = backends.json\n"
        "mock_rules = mock_rules.json\n"
        "assignments = assignments.jsonl\n"
        "groups = groups.jsonl\n"
        "workdir = out\n"
        "seed = 2024\n"
        "subset_sizes = 1,3,5\n"
        "min_valid_votes = 2\n"
        "tie_break = mark_missing\n"
        "min_words = 5\n",
        encoding="utf-8",
    )


if __name__ == "__main__":
    main()
