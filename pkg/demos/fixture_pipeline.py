"""The full pipeline on the shipped traces: learn one graph per attack, then
run the bundled query suite and print the verdict for each query."""
import sys
import tempfile
from pathlib import Path

from causalmi.cli import data_file, main
from causalmi.simulator import ATTACK_COLUMNS

with tempfile.TemporaryDirectory() as tmp:
    traces = str(data_file("mi_traces.csv"))
    attacks = sum((["--attack", a] for a in ATTACK_COLUMNS), [])
    main(["learn", "--traces", traces, *attacks, "--out", f"{tmp}/g_{{attack}}.dot", "--jobs", "0"])
    graphs = sum((["--graph", f"{tmp}/g_{a}.dot"] for a in ATTACK_COLUMNS), [])
    rc = main(["ate", "--traces", traces, *graphs, "--suite", str(data_file("query_suite.txt")),
               "--out", f"{tmp}/report.csv"])
    print(Path(f"{tmp}/report.csv").read_text(encoding="utf-8"))
sys.exit(rc)
