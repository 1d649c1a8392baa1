import json
import os


def prepare(workspace):
    with open(os.path.join(workspace, "data.json")) as fh:
        raw = json.load(fh)
    flat = [v for img in raw["images"] for row in img for v in row]
    mean = sum(flat) / len(flat)
    images = [[[[v - mean for v in row] for row in img]] for img in raw["images"]]
    return {"inputs": [images], "outputs": [[int(y) for y in raw["labels"]]]}
