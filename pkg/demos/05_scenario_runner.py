"""Driving the scenario runner from Python.

Runs every command of the CLI on the bundled limited excess-of-loss scenario
and lists what each one wrote.  The same runs from a shell:

    python -m contagion_reinsurance compare --config demos/configs/contagion_limited_xl.ini --out out/
"""
import json
import sys
from pathlib import Path

from contagion_reinsurance import cli

config = Path(__file__).parent / "configs" / "contagion_limited_xl.ini"
out_root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("scenario_output")

for command in cli.COMMANDS:
    out = out_root / command
    status = cli.run(command, config, out, workers=1)
    files = sorted(p.name for p in out.iterdir())
    shown = files if len(files) <= 6 else files[:5] + [f"... ({len(files)} files)"]
    print(f"{command:<9s} exit {status}  {', '.join(shown)}")

summary = json.loads((out_root / "compare" / "summary.json").read_text())
print("\ncompare summary")
for key in ("violations", "max_excess", "precondition", "converged"):
    print(f"  {key}: {summary[key]}")
