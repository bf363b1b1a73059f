#!/usr/bin/env python3
"""Regenerates the bundled fixture images and scenario documents under data/.

Images are tiny synthetic PNGs (a stick figure on a plain background), enough
to exercise the image path of the prompt builder and the wire format.

Scenario mocks are constructed, not recorded: each scenario gets 15 scripted
trials whose correct count and mean valence/arousal equal the reference
table, and whose per-modality replies are nested (prompt-only correct implies
image-only correct implies combined correct).
"""
import json
import os
import random
import struct
import zlib

W, H = 64, 48


def png(pixels):
    raw = b"".join(b"\x00" + bytes(c for px in row for c in px) for row in pixels)

    def chunk(tag, data):
        body = tag + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", struct.pack(">IIBBBBB", W, H, 8, 2, 0, 0, 0))
            + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b""))


def figure(arm_left, arm_right, lean=0, bg=(200, 210, 220), shirt=(60, 90, 160), x0=32):
    """arm_* in {"down", "out", "up", "fist"}; lean shifts the torso."""
    px = [[bg for _ in range(W)] for _ in range(H)]

    def rect(x, y, w, h, c):
        for yy in range(max(0, y), min(H, y + h)):
            for xx in range(max(0, x), min(W, x + w)):
                px[yy][xx] = c

    skin = (230, 190, 160)
    cx = x0 + lean
    rect(cx - 3, 6, 6, 6, skin)
    rect(cx - 4, 13, 8, 14, shirt)
    rect(x0 - 4, 27, 3, 14, (40, 40, 60))
    rect(x0 + 1, 27, 3, 14, (40, 40, 60))
    for side, pose in ((-1, arm_left), (1, arm_right)):
        ax = cx + side * 5 - (2 if side < 0 else 0)
        if pose == "down":
            rect(ax, 14, 2, 12, skin)
        elif pose == "out":
            rect(cx + (5 if side > 0 else -15), 15, 10, 2, skin)
        elif pose == "up":
            rect(ax, 3, 2, 12, skin)
        elif pose == "fist":
            rect(cx + (5 if side > 0 else -9), 15, 4, 2, skin)
            rect(cx + (8 if side > 0 else -11), 13, 3, 3, skin)
    return png(px)


FEW_SHOT = {
    "greeting.png": dict(arm_left="down", arm_right="up"),
    "hostile.png": dict(arm_left="fist", arm_right="fist", lean=2, shirt=(150, 40, 40)),
    "slumped.png": dict(arm_left="down", arm_right="down", lean=-1, shirt=(90, 90, 110)),
    "unclear.png": dict(arm_left="down", arm_right="down", x0=56),
}


TRIALS = 15

# id, truth, quadrant, utterance, correct (category, motions), wrong
# (category, motion), V_avg, A_avg, correct counts (combined, image, prompt),
# fixed first-trial (V, A, motion) or None, frames.
SCENARIOS = [
    dict(id="S1", truth="Aggression", quadrant="Q1",
         description="A person steps in with clenched fists and shouts at the robot.",
         utterance="Get away from me or you will regret it!",
         scene="a person leaning in with clenched fists, shouting",
         free="threatening the robot", motions=["punch", "guard stance"],
         wrong=("Disappointment", "cross arms"), v=-0.46, a=0.64, counts=(12, 11, 3),
         first=(-0.6, 0.7, "punch"),
         frames=[dict(arm_left="fist", arm_right="fist", lean=1, shirt=(150, 40, 40)),
                 dict(arm_left="fist", arm_right="fist", lean=2, shirt=(150, 40, 40)),
                 dict(arm_left="fist", arm_right="out", lean=3, shirt=(150, 40, 40))]),
    dict(id="S2", truth="Celebration", quadrant="Q2",
         description="A person jumps with both arms raised after a win.",
         utterance="We won! We actually won!",
         scene="a person jumping with both arms raised",
         free="celebrating a success", motions=["beat gesture", "cheer", "two-armed celebration"],
         wrong=("CalmGreeting", "wave right hand"), v=0.53, a=0.49, counts=(14, 12, 3),
         first=(0.6, 0.8, "beat gesture"),
         frames=[dict(arm_left="up", arm_right="up", shirt=(230, 160, 40)),
                 dict(arm_left="out", arm_right="up", shirt=(230, 160, 40)),
                 dict(arm_left="up", arm_right="out", shirt=(230, 160, 40))]),
    dict(id="S3", truth="CalmGreeting", quadrant="Q3",
         description="A person approaches calmly and raises one hand.",
         utterance="Hi there, nice to meet you.",
         scene="a smiling person raising one hand at chest height",
         free="greeting the robot", motions=["wave right hand", "handshake"],
         wrong=("Neutral", "stand still"), v=0.36, a=0.29, counts=(14, 12, 3), first=None,
         frames=[dict(arm_left="down", arm_right="out"),
                 dict(arm_left="down", arm_right="up"),
                 dict(arm_left="down", arm_right="out")]),
    dict(id="S4", truth="Disappointment", quadrant="Q4",
         description="A person lowers their head and sighs after bad news.",
         utterance="That did not go well at all.",
         scene="a person with lowered head and slumped shoulders",
         free="unhappy about an outcome", motions=["cross arms", "hands on hips"],
         wrong=("Aggression", "guard stance"), v=-0.32, a=0.47, counts=(14, 12, 3), first=None,
         frames=[dict(arm_left="down", arm_right="down", lean=-1, shirt=(90, 90, 110)),
                 dict(arm_left="down", arm_right="down", lean=-2, shirt=(90, 90, 110)),
                 dict(arm_left="down", arm_right="down", lean=-1, shirt=(90, 90, 110))]),
    dict(id="S5", truth="Neutral", quadrant="Neutral",
         description="A person gives directions in a flat tone.",
         utterance="The meeting room is down the hall on the left.",
         scene="a person standing upright and pointing to the side",
         free="giving directions", motions=["point", "stand still"],
         wrong=("CalmGreeting", "wave right hand"), v=0.03, a=0.25, counts=(13, 11, 3), first=None,
         frames=[dict(arm_left="out", arm_right="down"),
                 dict(arm_left="out", arm_right="down"),
                 dict(arm_left="out", arm_right="down", lean=-1)]),
    dict(id="S6", truth="Ambiguous", quadrant="Neutral",
         description="A person half out of frame mutters without a clear goal.",
         utterance="Hmm... well...",
         scene="a person partly outside the frame, posture unclear",
         free="no clear intent", motions=["stand still"],
         wrong=("CalmGreeting", "wave right hand"), v=0.11, a=0.29, counts=(12, 11, 3), first=None,
         frames=[dict(arm_left="down", arm_right="down", x0=58),
                 dict(arm_left="down", arm_right="down", x0=59),
                 dict(arm_left="down", arm_right="out", x0=57)]),
]

OFFSETS = [0, -7, 7, -5, 5, -3, 3, -9, 9, -2, 2, -4, 4, -6, 6]  # cents, sum 0


def series(mean, first=None, lo=-100, hi=100):
    """15 values in cents with exact mean; optionally pinning trial 0."""
    m = round(mean * 100)
    vals = [m + d for d in OFFSETS]
    if first is not None:
        delta = round(first * 100) - vals[0]
        vals[0] += delta
        for k in range(abs(delta)):
            vals[1 + k % (TRIALS - 1)] -= 1 if delta > 0 else -1
    assert sum(vals) == m * TRIALS and all(lo <= v <= hi for v in vals), (mean, vals)
    return [v / 100 for v in vals]


def reply(scene, category, free, conf, v, a, motion):
    return ("Looking at the frames and the words together.\n\n```\n"
            f"Description: {scene}\n"
            f"Intent: {category} - {free}\n"
            f"Confidence: {conf:.2f}\n"
            f"Valence: {v:.2f}\n"
            f"Arousal: {a:.2f}\n"
            f"Motion: {motion}\n```\n")


def scenario_doc(sc, index):
    rng = random.Random(101 + index)
    combined, image, prompt = sc["counts"]
    protected = [0] if sc["first"] else []
    pool = [k for k in range(TRIALS) if k not in protected]
    order = protected + rng.sample(pool, len(pool))
    # Nested correct sets: the first `n` entries of `order` under each mode.
    ok = {"combined": set(order[:combined]), "image_only": set(order[:image]), "prompt_only": set(order[:prompt])}
    fv = sc["first"][0] if sc["first"] else None
    fa = sc["first"][1] if sc["first"] else None
    vs = series(sc["v"], fv)
    arousal = series(sc["a"], fa, lo=0, hi=100)
    ambiguous = sc["truth"] == "Ambiguous"

    def text(k, mode):
        v, a = vs[k], arousal[k]
        if k in ok[mode]:
            if ambiguous:
                return reply(sc["scene"], "Ambiguous", sc["free"], 0.30 + 0.01 * (k % 5), v, a, "stand still")
            motion = sc["first"][2] if (k == 0 and sc["first"]) else sc["motions"][k % len(sc["motions"])]
            return reply(sc["scene"], sc["truth"], sc["free"], 0.70 + 0.01 * (k % 20), v, a, motion)
        cat, motion = sc["wrong"]
        return reply(sc["scene"], cat, "misread scene", 0.62, v, a, motion)

    trials = []
    for k in range(TRIALS):
        trials.append({
            "latency": "calibrated",
            "seed": 1000 * (index + 1) + k,
            "replies": [{"text": text(k, "combined")}],
            "by_modality": {
                "image_only": [{"text": text(k, "image_only")}],
                "prompt_only": [{"text": text(k, "prompt_only")}],
            },
        })
    return {
        "id": sc["id"],
        "description": sc["description"],
        "ground_truth_intent": sc["truth"],
        "designated_quadrant": sc["quadrant"],
        "trials": TRIALS,
        "duration_s": 4.0,
        "max_inferences": 1,
        "inputs": [
            {"t": 0.0, "images": [f"frame_{i}.png" for i in range(len(sc["frames"]))]},
            {"t": 0.1, "utterance": sc["utterance"]},
        ],
        "mock_trials": trials,
    }


REFERENCE = {
    "scenario_metrics": {
        "columns": ["i_acc", "v_avg", "a_avg", "s_select", "s_affect", "baseline_s_affect"],
        "rows": {
            "S1": {"i_acc": 0.800, "v_avg": -0.46, "a_avg": 0.64, "s_select": 5.00, "s_affect": 4.42, "baseline_s_affect": 4.16},
            "S2": {"i_acc": 0.933, "v_avg": 0.53, "a_avg": 0.49, "s_select": 4.64, "s_affect": 4.38, "baseline_s_affect": 4.20},
            "S3": {"i_acc": 0.933, "v_avg": 0.36, "a_avg": 0.29, "s_select": 4.20, "s_affect": 4.87, "baseline_s_affect": 4.82},
            "S4": {"i_acc": 0.933, "v_avg": -0.32, "a_avg": 0.47, "s_select": 3.27, "s_affect": 3.53, "baseline_s_affect": 3.13},
            "S5": {"i_acc": 0.867, "v_avg": 0.03, "a_avg": 0.25, "s_select": 4.87, "s_affect": 4.40, "baseline_s_affect": 3.71},
            "S6": {"i_acc": 0.800, "v_avg": 0.11, "a_avg": 0.29, "s_select": 4.69, "s_affect": 3.89, "baseline_s_affect": 1.76},
        },
        "baseline_s_select": None,
    },
    "module_latency": {
        "video_stream_hz": 20,
        "pi_i_avg_s": 2.392,
        "pi_i_median_s": 2.25,
        "pi_i_min_s": 1.72,
        "pi_i_max_s": 2.83,
        "pi_p_avg_per_window_s": 0.087,
        "pi_w_hz": 50,
    },
    "modality_ablation": {"prompt_only": 0.20, "image_only": 0.77, "combined": 0.87},
}


def main():
    root = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")
    out = os.path.join(root, "few_shot")
    os.makedirs(out, exist_ok=True)
    for name, kw in FEW_SHOT.items():
        with open(os.path.join(out, name), "wb") as f:
            f.write(figure(**kw))

    fixtures = os.path.join(root, "fixtures")
    for index, sc in enumerate(SCENARIOS):
        d = os.path.join(fixtures, "scenarios", sc["id"])
        os.makedirs(d, exist_ok=True)
        for i, kw in enumerate(sc["frames"]):
            with open(os.path.join(d, f"frame_{i}.png"), "wb") as f:
                f.write(figure(**kw))
        with open(os.path.join(d, "scenario.json"), "w") as f:
            json.dump(scenario_doc(sc, index), f, indent=2)
            f.write("\n")
    ref = os.path.join(fixtures, "reference")
    os.makedirs(ref, exist_ok=True)
    with open(os.path.join(ref, "tables.json"), "w") as f:
        json.dump(REFERENCE, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
