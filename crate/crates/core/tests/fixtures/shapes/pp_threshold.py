THRESHOLD = 0.5


def postprocess(predictions, plan):
    out = []
    for p0, p1 in predictions:
        total = p0 + p1
        out.append(1 if total > 0 and p1 / total > THRESHOLD else 0)
    return out
