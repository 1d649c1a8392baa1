import random


def generate(seed):
    rng = random.Random(seed)
    images, labels = [], []
    for i in range(16):
        label = i % 2
        img = [[rng.random() * 0.5 + (0.5 if (r < 2) == bool(label) else 0.0) for _ in range(4)]
               for r in range(4)]
        images.append([img])
        labels.append(label)
    return {"inputs": [images], "outputs": [labels]}
