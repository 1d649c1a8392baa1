def postprocess(predictions, plan):
    # ties go to the lower class
    labels = []
    for row in predictions:
        best = 0
        for c in range(1, len(row)):
            if row[c] > row[best]:
                best = c
        labels.append(best)
    return labels
