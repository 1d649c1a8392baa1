def postprocess(predictions, plan):
    return [max(0.0, float(p)) for p in predictions]
