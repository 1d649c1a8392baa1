import math


def flatten(img):
    return [v for ch in img for row in ch for v in row]


class NearestCentroid:
    """Running class means; scores are a softmax over negative distances."""

    def __init__(self):
        self.sums = {}
        self.counts = {0: 0, 1: 0}

    def distance(self, x, c):
        if not self.counts[c]:
            return 0.0
        mean = [s / self.counts[c] for s in self.sums[c]]
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(x, mean)))

    def forward(self, inputs):
        out = []
        for img in inputs[0]:
            x = flatten(img)
            d = [-self.distance(x, c) for c in (0, 1)]
            m = max(d)
            e = [math.exp(v - m) for v in d]
            out.append([v / sum(e) for v in e])
        return out

    def train_step(self, inputs, outputs, hparams):
        total = 0.0
        for img, y in zip(inputs[0], outputs[0]):
            x = flatten(img)
            total += self.distance(x, y)
            acc = self.sums.setdefault(y, [0.0] * len(x))
            for j, v in enumerate(x):
                acc[j] += v
            self.counts[y] += 1
        return total / max(1, len(outputs[0]))


def build_model(plan, hparams):
    return NearestCentroid()
