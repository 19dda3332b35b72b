"""Write the bundled demo: the hug preset with person 2 pushed 5 cm into person 1.

    python scripts/make_demo.py [--out demo/hug_overlap]

The ground-truth meshes are the unpushed preset, so ``evaluate`` scores the
refined scene against the touching configuration.
"""
import argparse
import json
from pathlib import Path

import numpy as np

from contactrefine.scene import load_scene_file, write_preset

PUSH = 0.05


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "demo" / "hug_overlap"))
    args = ap.parse_args()
    path = write_preset("hug", args.out)
    sf = load_scene_file(path)
    p2 = sf.persons[1]
    p2.pose = p2.pose.replace(t3d=p2.pose.t3d + np.array([0.0, 0.0, -PUSH]))
    sf.save(path)
    # a short budget keeps the demo under a minute on one core
    (Path(args.out) / "config.json").write_text(json.dumps({"max_iters": 20}, indent=1))
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
