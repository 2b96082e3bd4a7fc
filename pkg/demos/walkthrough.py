"""Drive the whole CLI on a synthetic desk-scale workspace.

    python demos/walkthrough.py [workdir]

Writes raw inputs with ``write_demo_workspace``, then runs every command in
order against the generated ``config.yaml``. Everything lands under
``<workdir>/runs/run-<hash>``; running it twice gives identical bytes.
"""

import json
import sys
import tempfile
from pathlib import Path

from aligndet.cli import main
from aligndet.workspace import write_demo_workspace

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="aligndet-demo-"))
config = write_demo_workspace(work / "ws", n_train=40, n_eval=20)
out = work / "runs"
print(f"workspace: {config.parent}\n")

sample = sorted((config.parent / "bench" / "surreal" / "surreal-photo").glob("*.png"))[0]
steps = [
    ("pixel supervision: real photos vs their pseudo-reconstructions", ["build", "--kind", "pixel"]),
    ("semantic supervision: real vs surreal twins, one degradation per pair", ["build", "--kind", "semantic"]),
    ("benchmark: faithful and surreal fakes per generator", ["build", "--kind", "aigi-now"]),
    ("train the reference pixel expert", ["train-expert"]),
    ("export DPO preference pairs for the external VLM trainer", ["export-dpo"]),
    ("fused verdict for one surreal image", ["detect", str(sample)]),
    ("balanced accuracy of the fused detector", ["eval"]),
    ("the expert under double resizing", ["robustness", "--detector", "expert"]),
    ("alignment probe: which model learns from which supervision", ["probe"]),
]
for title, argv in steps:
    print(f"== {title}")
    code = main([*argv, "--config", str(config), "--out", str(out)])
    if code:
        sys.exit(code)
    print()

run = next(out.iterdir())
probe = json.loads((run / "probe" / "report.json").read_text())["probe_matrix"]
print("probe matrix (balanced accuracy on pixel_test / semantic_test):")
for cell in probe["cells"]:
    acc = cell["accuracy"]
    if acc:
        print(f"  {cell['model']:>7} trained on {cell['supervision']:<9} {acc['pixel_test']:.3f} / {acc['semantic_test']:.3f}")
