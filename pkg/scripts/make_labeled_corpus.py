#!/usr/bin/env python3
"""Regenerate the hand-labeled parser-fidelity corpus.

Writes tests/data/corpus_10p.txt (a ~10-page synthetic screenplay) plus
tests/data/corpus_10p_labels.json with the ground-truth characters, spots,
and dialogue segments. The labels come from the generator's own bookkeeping,
not from the parser, so they are a genuinely independent oracle. Slugs are
written out literally for the same reason.
"""

import json
import random
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"

# (cue name, slug, expected display name); slugs and display names are
# hand-derived, incl. punctuation/accents
CHARACTERS = [
    ("ALICE", "alice", "Alice"),
    ("BEN", "ben", "Ben"),
    ("MRS. O'BRIEN", "mrs-obrien", "Mrs. O'Brien"),
    ("DR. IBÁÑEZ", "dr-ibanez", "Dr. Ibáñez"),
    ("CAPTAIN REED", "captain-reed", "Captain Reed"),
    ("LENA", "lena", "Lena"),
]

# (heading, slug, display name, INT/EXT, canonical time-of-day) — the last
# three are the expected IR fields, hand-derived (DUSK/EVENING fold to NIGHT,
# DAWN to DAY)
SPOTS = [
    ("INT. LIGHTHOUSE - NIGHT", "lighthouse", "Lighthouse", "INT", "NIGHT"),
    ("EXT. HARBOR - DAY", "harbor", "Harbor", "EXT", "DAY"),
    ("INT. RADIO ROOM - DUSK", "radio-room", "Radio Room", "INT", "NIGHT"),
    ("EXT. CLIFF PATH - DAWN", "cliff-path", "Cliff Path", "EXT", "DAY"),
    ("INT. TAVERN - EVENING", "tavern", "Tavern", "INT", "NIGHT"),
]

ACTIONS = [
    "Wind rattles the shutters.",
    "A gull lands on the railing and stares.",
    "The lamp sweeps its slow circle.",
    "Rope coils lie in careful spirals.",
    "Static hisses from the speaker.",
    "Salt crusts the window glass.",
]

LINES = [
    "The signal came through again last night.",
    "You said that yesterday too.",
    "Three flashes, then nothing.",
    "Somebody has to row out there.",
    "Not in this weather.",
    "The chart says the shoal moved.",
    "Charts lie. Water doesn't.",
    "I logged it at four bells.",
    "Then the log is wrong.",
    "We wait for the tide.",
    "Waiting is what sank the Meridian.",
    "That was twenty years ago.",
    "Feels like this morning.",
    "Pass me the glass, would you?",
    "There. On the spit.",
    "I don't see anything.",
    "Look where the foam breaks.",
    "We should tell the harbormaster.",
    "He knows. He always knows.",
    "Then why hasn't he rung the bell?",
]

PARENTHETICALS = ["quietly", "beat", "into the radio", "half to herself", None,
                  None, None, None]


def main():
    rng = random.Random(4177)
    out_lines = []
    segments = []
    seen_chars = {}
    seen_spots = {}

    n_scenes = 18
    for s in range(n_scenes):
        heading, spot_slug, spot_name, int_ext, time = SPOTS[s % len(SPOTS)]
        seen_spots[spot_slug] = {"id": spot_slug, "name": spot_name,
                                 "interior_exterior": int_ext,
                                 "time_of_day": time}
        out_lines.append(heading)
        out_lines.append("")
        out_lines.append(rng.choice(ACTIONS))
        out_lines.append("")

        cast = rng.sample(CHARACTERS, rng.randint(2, 3))
        prev_distinct = None
        n_cues = rng.randint(5, 8)
        speaker = None
        for _ in range(n_cues):
            # mostly alternate, occasionally repeat the same speaker
            if speaker is None or rng.random() < 0.8:
                choices = [c for c in cast if c != speaker] or cast
                nxt = rng.choice(choices)
            else:
                nxt = speaker
            if speaker is not None and nxt[1] != speaker[1]:
                prev_distinct = speaker
            speaker = nxt
            cue, slug, display = speaker
            seen_chars[slug] = {"id": slug, "name": display}

            ext = " (V.O.)" if rng.random() < 0.08 else ""
            out_lines.append(cue + ext)
            paren = rng.choice(PARENTHETICALS)
            if paren:
                out_lines.append(f"({paren})")
            line = rng.choice(LINES)
            out_lines.append(line)
            out_lines.append("")
            segments.append({
                "speaker_id": slug,
                "spot_id": spot_slug,
                "line": line,
                "parenthetical": paren,
                "addressee_ids": [prev_distinct[1]] if prev_distinct else [],
            })

    text = "\n".join(out_lines).rstrip() + "\n"
    DATA.mkdir(parents=True, exist_ok=True)
    (DATA / "corpus_10p.txt").write_text(text, encoding="utf-8")
    labels = {
        "characters": sorted(seen_chars.values(), key=lambda c: c["id"]),
        "spots": sorted(seen_spots.values(), key=lambda s: s["id"]),
        "segments": segments,
    }
    (DATA / "corpus_10p_labels.json").write_text(
        json.dumps(labels, indent=1, sort_keys=True, ensure_ascii=False),
        encoding="utf-8")
    print(f"wrote {len(segments)} segments, {len(seen_chars)} characters, "
          f"{len(seen_spots)} spots")


if __name__ == "__main__":
    main()
