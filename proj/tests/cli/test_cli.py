#!/usr/bin/env python3
"""End-to-end checks of the cascade command line. Usage: test_cli.py BINARY SOURCE_DIR"""

import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

BIN = str(Path(sys.argv[1]).resolve())
SRC = Path(sys.argv[2])
FIX = SRC / "tests" / "fixtures"
failures = []


def run(*args, stdin=None, env=None, cwd=None):
    e = dict(os.environ)
    for k in list(e):
        if k.startswith("CASCADE_"):
            del e[k]
    e.update(env or {})
    return subprocess.run([BIN, *map(str, args)], input=stdin, capture_output=True, text=True, env=e, cwd=cwd)


def check(cond, what, proc=None):
    if not cond:
        detail = f"\n  exit {proc.returncode}\n  stderr: {proc.stderr[-800:]}" if proc else ""
        failures.append(what + detail)
        print("FAIL", what + detail)
    else:
        print("ok  ", what)


def lines(text):
    return [json.loads(l) for l in text.splitlines() if l.strip()]


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    labels = tmp / "labels.json"
    patterns = tmp / "patterns"
    patterns.mkdir()

    p = run("labels", "load", "--in", FIX / "labels.csv", SRC / "data" / "core_registry.txt", "--out", labels)
    check(p.returncode == 0 and labels.exists(), "labels load writes a snapshot", p)
    p = run("labels", "load", "--in", FIX / "labels.csv", "--out", labels)
    check(json.loads(labels.read_text())["version"] == 2, "reloading bumps the snapshot version", p)
    run("labels", "load", "--in", FIX / "labels.csv", SRC / "data" / "core_registry.txt", "--out", labels)

    p = run("generalize", "--attack-logic", FIX / "reflection_drain_attack.json", "--labels", labels,
            "--out", patterns / "drain.json")
    check(p.returncode == 0 and lines(p.stdout)[0]["sim_final"] == 1.0, "generalize verifies the self-match", p)

    corpus = (FIX / "imitation_corpus.jsonl").read_text() + (FIX / "benign_corpus.jsonl").read_text()
    n_imit = len((FIX / "imitation_corpus.jsonl").read_text().splitlines())
    p = run("scan", "--traces", "-", "--patterns", patterns, "--labels", labels, "--workers", 4, "--ordered",
            "--report", tmp / "report.json", stdin=corpus)
    rows = lines(p.stdout)
    check(p.returncode == 0, "scan exits 0 on clean input", p)
    check(all(r["flagged"] for r in rows[:n_imit]), "every imitation is flagged", p)
    check(not any(r["flagged"] for r in rows[n_imit:]), "no benign swap is flagged", p)
    report = json.loads((tmp / "report.json").read_text())
    check(report["flagged"] == sum(r["flagged"] for r in rows), "report count matches flagged lines")

    p = run("scan", "--traces", FIX / "benign_corpus.jsonl", "--patterns", tmp / "no_such_dir", "--labels", labels)
    check(p.returncode == 1 and str(tmp / "no_such_dir") in p.stderr, "missing pattern dir exits 1 naming it", p)

    p = run("scan", "--traces", "-", "--patterns", patterns, "--labels", labels, stdin="{broken\n" + corpus)
    check(p.returncode == 2 and len(lines(p.stdout)) == len(corpus.splitlines()), "malformed line exits 2", p)

    p = run("scan", "--frobnicate")
    check(p.returncode == 64, "unknown flag exits 64", p)
    p = run("scan", "--patterns", patterns, "--labels", labels)
    check(p.returncode == 64 and "--traces" in p.stderr, "missing --traces exits 64", p)

    p = run("extract", "--traces", "-", "--labels", labels, "--explain",
            stdin=(FIX / "reflection_drain_attack.json").read_text())
    check(p.returncode == 0 and len(lines(p.stdout)[0]["items"]) > 0 and "explain" in p.stderr,
          "extract reads stdin and explains to stderr", p)

    synth_corpus = tmp / "corpus.jsonl"
    p = run("synth", "--seed-count", 12, "--imitations", 4, "--spec", FIX / "mutation_spec.json", "--ratio", "1:1",
            "--seed", 5, "--out", synth_corpus)
    check(p.returncode == 0 and len(synth_corpus.read_text().splitlines()) == 96, "synth writes the corpus", p)
    again = run("synth", "--seed-count", 12, "--imitations", 4, "--spec", FIX / "mutation_spec.json",
                "--ratio", "1:1", "--seed", 5)
    check(again.stdout == synth_corpus.read_text(), "synth is reproducible under --seed", again)

    p = run("tune", "--corpus", synth_corpus, "--grid-step", 0.5, "--seed", 1)
    check(p.returncode == 0 and json.loads(p.stdout)["grid_points"] == 9, "tune --grid-step 0.5 has 9 points", p)

    # Precedence: flags > CASCADE_ environment > cascade.toml.
    (tmp / "cascade.toml").write_text(f'workers = 2\nlabels = "{labels}"\npatterns = "{patterns}"\n')
    base = ["scan", "--traces", FIX / "benign_corpus.jsonl", "--report", tmp / "r.json"]
    run(*base, cwd=tmp)
    check(json.loads((tmp / "r.json").read_text())["workers"] == 2, "config file supplies workers")
    run(*base, cwd=tmp, env={"CASCADE_WORKERS": "3"})
    check(json.loads((tmp / "r.json").read_text())["workers"] == 3, "environment beats the config file")
    run(*base, "--workers", 5, cwd=tmp, env={"CASCADE_WORKERS": "3"})
    check(json.loads((tmp / "r.json").read_text())["workers"] == 5, "flag beats the environment")

    traces = tmp / "traces.jsonl"
    p = run("synth", "--traces", 60, "--labels-out", tmp / "world.json", "--seed", 2, "--out", traces)
    check(p.returncode == 0, "synth --traces writes raw traces", p)
    p = run("bench", "--corpus", traces, "--patterns", patterns, "--labels", tmp / "world.json", "--reps", 3)
    b = json.loads(p.stdout) if p.returncode == 0 else {}
    check(p.returncode == 0 and len(b["matcher_scaling"]) == 4 and b["scan"]["total"] == 60, "bench report", p)

    p = run("--version", "--labels", labels)
    check(p.returncode == 0 and "cheatsheet" in p.stdout and "labels" in p.stdout and "hash" in p.stdout,
          "--version prints snapshot hashes", p)

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
