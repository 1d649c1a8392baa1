class NearestNeighbours:
    def __init__(self, k):
        self.k = max(1, int(k))
        self.rows = []
        self.targets = []

    def train_step(self, inputs, outputs, hparams):
        self.rows.extend(list(r) for r in inputs[0])
        self.targets.extend(outputs[0])
        return 0.0

    def predict(self, row):
        if not self.rows:
            return 0.0
        dist = sorted(
            (sum((a - b) ** 2 for a, b in zip(row, other)), i) for i, other in enumerate(self.rows)
        )
        near = [self.targets[i] for _, i in dist[: self.k]]
        return sum(near) / len(near)

    def forward(self, inputs):
        return [self.predict(row) for row in inputs[0]]


def build_model(plan, hparams):
    return NearestNeighbours(hparams.get("k", 5))
