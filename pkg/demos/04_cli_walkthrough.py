"""The command-line pipeline end to end, driven from Python.

Equivalent shell session:

    mrfbg synth --in scene.txt --out run/syn
    mrfbg estimate-bg --in run/syn/frames --out run/bg.pgm --frames 200
    mrfbg eval --in run/bg.pgm --gt run/syn/gt_background.pgm
    mrfbg train --in run/syn/frames --out run/model.bgm --frames 200
    mrfbg segment --model run/model.bgm --in run/syn/frames --out run/masks
    mrfbg eval --in run/masks --gt run/syn/gt_masks --out run/scores.csv

Run: python demos/04_cli_walkthrough.py [out_dir]
"""

import os
import sys

from mrfbg import synth
from mrfbg.cli import main

root = sys.argv[1] if len(sys.argv) > 1 else "demo_out/cli"
os.makedirs(root, exist_ok=True)
spec, _ = synth.parked_then_moving_scene(seed=1, width=160, height=128, park=(160, 170), size=(40, 48))
scene_file = os.path.join(root, "scene.txt")
with open(scene_file, "w") as fh:
    fh.write(synth.scene_to_text(spec))


def run(*argv):
    print("$ mrfbg", " ".join(argv))
    code = main(list(argv))
    if code:
        sys.exit(code)


j = lambda *p: os.path.join(root, *p)  # noqa: E731
run("synth", "--in", scene_file, "--out", j("syn"))
run("estimate-bg", "--in", j("syn", "frames"), "--out", j("bg.pgm"), "--frames", "200")
run("eval", "--in", j("bg.pgm"), "--gt", j("syn", "gt_background.pgm"))
run("train", "--in", j("syn", "frames"), "--out", j("model.bgm"), "--frames", "200")
run("segment", "--model", j("model.bgm"), "--in", j("syn", "frames"), "--out", j("masks"))
run("eval", "--in", j("masks"), "--gt", j("syn", "gt_masks"), "--out", j("scores.csv"))
