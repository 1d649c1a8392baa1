import math

FEATURES = 16


def flatten(img):
    x = [v for ch in img for row in ch for v in row]
    if len(x) != FEATURES:
        raise ValueError(f"expected {FEATURES} features per image, got {len(x)}")
    return x


class Linear16:
    def __init__(self):
        self.w = [[0.0] * (FEATURES + 1) for _ in range(2)]

    def forward(self, inputs):
        out = []
        for img in inputs[0]:
            x = flatten(img)
            z = [sum(a * b for a, b in zip(w, x)) + w[-1] for w in self.w]
            m = max(z)
            e = [math.exp(v - m) for v in z]
            out.append([v / sum(e) for v in e])
        return out

    def train_step(self, inputs, outputs, hparams):
        lr = float(hparams.get("learning_rate", 0.5))
        probs = self.forward(inputs)
        loss = 0.0
        for img, y, p in zip(inputs[0], outputs[0], probs):
            x = flatten(img)
            loss -= math.log(max(p[y], 1e-12))
            for c in (0, 1):
                g = (p[c] - (1.0 if c == y else 0.0)) / len(probs)
                for j in range(FEATURES):
                    self.w[c][j] -= lr * g * x[j]
                self.w[c][-1] -= lr * g
        return loss / len(probs)


def build_model(plan, hparams):
    return Linear16()
