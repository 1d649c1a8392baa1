import csv
import os


def prepare(workspace):
    with open(os.path.join(workspace, "data.csv")) as fh:
        rows = list(csv.DictReader(fh))
    features = [[float(r["x1"]), float(r["x2"])] for r in rows]
    return {"inputs": [features], "outputs": [[float(r["y"]) for r in rows]]}
