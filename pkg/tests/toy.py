"""Small random networks and batches shared by gradient tests."""
import numpy as np

from egamtl.netcore import Batch, MultiTaskNet


def toy_problem(seed, B=5, d_in=6, trunk=(7, 5), head_hidden=(), out=(8, 9, 6)):
    rng = np.random.default_rng(seed)
    net = MultiTaskNet.build(d_in, trunk_hidden=trunk, head_hidden=head_hidden, out_dims=out, seed=seed)
    # non-zero biases so every term of the backward pass is exercised
    for mlp in [net.trunk] + [h.mlp for h in net.heads]:
        mlp.set_flat(mlp.get_flat() + rng.normal(0, 0.1, mlp.n_params))
    anchors = rng.random((B, out[1])) < 0.25
    anchors[0] = False  # one window without anchors
    anchors[1, 0] = True
    batch = Batch(
        x=rng.standard_normal((B, d_in)),
        waveform=rng.standard_normal((B, out[0])),
        anchors=anchors,
        length=rng.integers(0, out[2], B),
    )
    return net, batch
