import json
import os


def scale(img):
    flat = [v for row in img for v in row]
    lo, hi = min(flat), max(flat)
    span = hi - lo or 1.0
    return [[(v - lo) / span for v in row] for row in img]


def prepare(workspace):
    with open(os.path.join(workspace, "data.json")) as fh:
        raw = json.load(fh)
    images = [[scale(img)] for img in raw["images"]]
    return {"inputs": [images], "outputs": [[int(y) for y in raw["labels"]]]}
