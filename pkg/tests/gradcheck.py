"""Whole-model finite-difference check shared by unit and acceptance tests."""

import numpy as np

from trifuse import fusion as F
from trifuse import tensor as T
from trifuse.fusion import Modality

from oracles import rel_error

WIDTHS = {Modality.VIDEO: 6, Modality.AUDIO: 5, Modality.LANGUAGE: 4}


def model_gradient_errors(strategy, draws=50, seed=0, d=4, h=8, step=1e-5, modalities=tuple(Modality)):
    """Worst norm-wise relative error per parameter over ``draws`` random models and inputs."""
    rng = np.random.default_rng(seed)
    worst = {}
    for draw in range(draws):
        model = F.init_model(strategy, modalities, WIDTHS, d=d, h=h, seed=draw)
        for p in model.parameters():
            p.data[...] = rng.normal(scale=0.7, size=p.shape)
        feats = {m: rng.normal(size=WIDTHS[m]) for m in model.modalities}
        label = int(rng.integers(2))
        for p in model.parameters():
            p.grad = None
        with T.Tape() as tape:
            loss = F.loss(model, feats, label)
        T.backward(tape, loss)
        for name, p in model.params.items():
            num = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + step
                up = F.loss(model, feats, label).item()
                flat[i] = old - step
                down = F.loss(model, feats, label).item()
                flat[i] = old
                num.reshape(-1)[i] = (up - down) / (2 * step)
            err = rel_error(p.grad, num)
            worst[name] = max(worst.get(name, 0.0), err)
    return worst
