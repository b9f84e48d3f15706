"""The full experiment: specialized vs balanced teacher origins, end to end.

Drives the staged pipeline twice with a shared data seed (so only the split
kind differs), then renders the combined comparison tables. Roughly 15
seconds; artifacts land under demos_out/.
"""

from mstkd import pipeline

for split in ("specialized", "balanced"):
    doc = pipeline.default_config_dict()
    doc["split"] = split
    doc["out_dir"] = f"demos_out/{split}"
    cfg = pipeline.config_from_dict(doc)
    print(f"=== {split} pipeline -> {cfg.out_dir}")
    pipeline.run_all(cfg)

doc = pipeline.default_config_dict()
doc["out_dir"] = "demos_out/specialized"
cfg = pipeline.config_from_dict(doc)
out = pipeline.cmd_report(cfg, ["demos_out/specialized", "demos_out/balanced"],
                          out_override="demos_out/comparison")
print(f"comparison tables written to {out}")
print("re-running this script skips completed stages; delete demos_out/ or")
print("pass --force through the mstkd CLI to recompute.")
