#!/usr/bin/env python3
"""Writes a small NELL-style background graph and few-shot task files.

Athletes play for teams, teams play in cities and sports. Two held-out
relations (athletehomecity, athleteplayssport) follow two-hop paths, so
every support and query pair has a connecting subgraph.
"""
import argparse
import json
import os
import random


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = random.Random(args.seed)

    sports = [f"concept:sport:sport{i}" for i in range(8)]
    cities = [f"concept:city:city{i}" for i in range(40)]
    teams = [f"concept:sportsteam:team{i}" for i in range(120)]
    athletes = [f"concept:athlete:athlete{i}" for i in range(600)]
    stadiums = [f"concept:stadiumoreventvenue:venue{i}" for i in range(60)]

    triples = set()
    team_city, team_sport = {}, {}
    for i, t in enumerate(teams):
        team_city[t] = rng.choice(cities)
        team_sport[t] = sports[i % len(sports)]
        triples.add((t, "concept:teamplaysincity", team_city[t]))
        triples.add((t, "concept:teamplayssport", team_sport[t]))
        triples.add((t, "concept:teamhomestadium", rng.choice(stadiums)))
    for s in stadiums:
        triples.add((s, "concept:stadiumlocatedincity", rng.choice(cities)))
    home, plays = [], []
    for a in athletes:
        t = rng.choice(teams)
        triples.add((a, "concept:athleteplaysforteam", t))
        if rng.random() < 0.3:
            triples.add((a, "concept:athleteplaysforteam", rng.choice(teams)))
        home.append((a, team_city[t]))
        plays.append((a, team_sport[t]))
        # Distractors.
        if rng.random() < 0.5:
            triples.add((a, "concept:personborninlocation", rng.choice(cities)))
        if rng.random() < 0.3:
            triples.add((a, "concept:athletewinsawardtrophytournament", f"concept:award:trophy{rng.randrange(15)}"))
    for _ in range(300):
        a, b = rng.sample(teams, 2)
        triples.add((a, "concept:teamplaysagainstteam", b))

    # Task triplets are withheld from the background graph.
    os.makedirs(args.out, exist_ok=True)
    tasks = {"concept:athletehomecity": home, "concept:athleteplayssport": plays}
    lines = sorted(f"{h}\t{r}\t{t}" for h, r, t in triples)
    assert len(lines) <= 5000, len(lines)
    with open(os.path.join(args.out, "nell_mini.tsv"), "w") as f:
        f.write("\n".join(lines) + "\n")
    os.makedirs(os.path.join(args.out, "nell_tasks"), exist_ok=True)
    for name, pairs in tasks.items():
        pairs = list(dict.fromkeys(pairs))
        rng.shuffle(pairs)
        spec = {
            "relation": name,
            "support": [[h, name, t] for h, t in pairs[:3]],
            "queries": [{"head": h, "positive": t} for h, t in pairs[3:23]],
        }
        stem = name.split(":")[1]
        with open(os.path.join(args.out, "nell_tasks", stem + ".json"), "w") as f:
            json.dump(spec, f, indent=1)
            f.write("\n")


if __name__ == "__main__":
    main()
