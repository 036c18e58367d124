"""One gradient-check case builder per differentiable tensor op.

Each builder draws shapes/constants from its rng and returns (make_loss,
arrays); make_loss must be a pure function of the Tensor arguments so the
finite-difference oracle can re-evaluate it.
"""

from empchat import tensor as tc
from empchat.rng import stream


def _rand(rng, *shape):
    return rng.uniform(-2.0, 2.0, size=shape)


def _weighted_sum(out, w):
    return tc.tsum(tc.mul(out, tc.Tensor(w)))


def case_add(rng):
    x, y = _rand(rng, 3, 4), _rand(rng, 3, 4)
    w = _rand(rng, 3, 4)
    return lambda a, b: _weighted_sum(tc.add(a, b), w), [x, y]


def case_add_bias(rng):
    x, b = _rand(rng, 3, 4), _rand(rng, 4)
    w = _rand(rng, 3, 4)
    return lambda a, c: _weighted_sum(tc.add(a, c), w), [x, b]


def case_add_const(rng):
    x = _rand(rng, 2, 3)
    const = _rand(rng, 3)
    w = _rand(rng, 2, 3)
    return lambda a: _weighted_sum(tc.add_const(a, const), w), [x]


def case_mul(rng):
    x, y = _rand(rng, 2, 5), _rand(rng, 2, 5)
    w = _rand(rng, 2, 5)
    return lambda a, b: _weighted_sum(tc.mul(a, b), w), [x, y]


def case_mul_scalar(rng):
    x = _rand(rng, 4, 3)
    s = float(rng.uniform(-2, 2))
    w = _rand(rng, 4, 3)
    return lambda a: _weighted_sum(tc.mul_scalar(a, s), w), [x]


def case_matmul2d(rng):
    x, y = _rand(rng, 3, 4), _rand(rng, 4, 2)
    w = _rand(rng, 3, 2)
    return lambda a, b: _weighted_sum(tc.matmul(a, b), w), [x, y]


def case_matmul3d(rng):
    x, y = _rand(rng, 2, 3, 4), _rand(rng, 2, 4, 3)
    w = _rand(rng, 2, 3, 3)
    return lambda a, b: _weighted_sum(tc.matmul(a, b), w), [x, y]


def case_dot(rng):
    x, y = _rand(rng, 5), _rand(rng, 5)
    return lambda a, b: tc.dot(a, b), [x, y]


def case_reshape(rng):
    x = _rand(rng, 3, 4)
    w = _rand(rng, 2, 6)
    return lambda a: _weighted_sum(tc.reshape(a, (2, 6)), w), [x]


def case_transpose(rng):
    x = _rand(rng, 2, 3, 4)
    w = _rand(rng, 4, 2, 3)
    return lambda a: _weighted_sum(tc.transpose(a, (2, 0, 1)), w), [x]


def case_slice_rows(rng):
    x = _rand(rng, 6, 3)
    w = _rand(rng, 3, 3)
    return lambda a: _weighted_sum(tc.slice_rows(a, 2, 5), w), [x]


def case_embedding(rng):
    table = _rand(rng, 7, 4)
    ids = rng.integers(0, 7, size=5)
    w = _rand(rng, 5, 4)
    return lambda t: _weighted_sum(tc.embedding(t, ids), w), [table]


def case_concat(rng):
    x, y = _rand(rng, 3), _rand(rng, 4)
    w = _rand(rng, 7)
    return lambda a, b: _weighted_sum(tc.concat([a, b]), w), [x, y]


def case_sum(rng):
    x = _rand(rng, 3, 3)
    return lambda a: tc.tsum(a), [x]


def case_mean(rng):
    x = _rand(rng, 4, 2)
    return lambda a: tc.tmean(a), [x]


def case_softmax(rng):
    x = _rand(rng, 3, 5)
    w = _rand(rng, 3, 5)
    return lambda a: _weighted_sum(tc.softmax(a), w), [x]


def case_log_softmax(rng):
    x = _rand(rng, 3, 5)
    w = _rand(rng, 3, 5)
    return lambda a: _weighted_sum(tc.log_softmax(a), w), [x]


def case_cross_entropy_mean(rng):
    x = _rand(rng, 4, 6)
    targets = rng.integers(0, 6, size=4)
    return lambda a: tc.cross_entropy(a, targets, reduction="mean"), [x]


def case_cross_entropy_none(rng):
    x = _rand(rng, 4, 6)
    targets = rng.integers(0, 6, size=4)
    w = _rand(rng, 4)
    return lambda a: _weighted_sum(tc.cross_entropy(a, targets, reduction="none"), w), [x]


def case_cross_entropy_single(rng):
    x = _rand(rng, 6)
    target = int(rng.integers(0, 6))
    return lambda a: tc.cross_entropy(a, target), [x]


def case_layer_norm(rng):
    x = _rand(rng, 3, 6)
    gain = rng.uniform(0.5, 2.0, size=6)
    bias = _rand(rng, 6)
    w = _rand(rng, 3, 6)
    return lambda a, g, b: _weighted_sum(tc.layer_norm(a, g, b, eps=1e-5), w), [x, gain, bias]


def case_gelu(rng):
    x = _rand(rng, 3, 4)
    w = _rand(rng, 3, 4)
    return lambda a: _weighted_sum(tc.gelu(a), w), [x]


def case_dropout(rng):
    x = _rand(rng, 4, 4)
    w = _rand(rng, 4, 4)
    seed = int(rng.integers(0, 2**31))
    # a fresh stream per evaluation keeps the mask identical across FD probes
    return (
        lambda a: _weighted_sum(tc.dropout(a, 0.25, stream(seed, "fd-dropout")), w),
        [x],
    )


def case_composition(rng):
    """Random 3-layer composition: linear / layer_norm+gelu / softmax head."""
    x = _rand(rng, 2, 5)
    w1 = _rand(rng, 5, 4) * 0.5
    gain = rng.uniform(0.5, 1.5, size=4)
    bias = _rand(rng, 4)
    w2 = _rand(rng, 4, 3) * 0.5
    targets = rng.integers(0, 3, size=2)

    def make_loss(a, m1, g, b, m2):
        h = tc.matmul(a, m1)
        h = tc.gelu(tc.layer_norm(h, g, b, eps=1e-5))
        return tc.cross_entropy(tc.matmul(h, m2), targets)

    return make_loss, [x, w1, gain, bias, w2]


OP_CASES = [
    ("add", case_add),
    ("add_bias", case_add_bias),
    ("add_const", case_add_const),
    ("mul", case_mul),
    ("mul_scalar", case_mul_scalar),
    ("matmul_2d", case_matmul2d),
    ("matmul_3d", case_matmul3d),
    ("dot", case_dot),
    ("reshape", case_reshape),
    ("transpose", case_transpose),
    ("slice_rows", case_slice_rows),
    ("embedding", case_embedding),
    ("concat", case_concat),
    ("sum", case_sum),
    ("mean", case_mean),
    ("softmax", case_softmax),
    ("log_softmax", case_log_softmax),
    ("cross_entropy_mean", case_cross_entropy_mean),
    ("cross_entropy_none", case_cross_entropy_none),
    ("cross_entropy_single", case_cross_entropy_single),
    ("layer_norm", case_layer_norm),
    ("gelu", case_gelu),
    ("dropout", case_dropout),
    ("composition", case_composition),
]
