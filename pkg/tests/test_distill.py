import numpy as np
import pytest

from kdwb.data import Dataset, gen_uniform_noise, one_hot
from kdwb.distill import (TrainConfig, TrainingError, cache_soft_labels, distill_augmented,
                          distill_data_free, evaluate, should_stop, train_teacher)
from kdwb.engine import ShapeError, init_network
from kdwb.losses import cross_entropy

ARCH = "Conv(4,3,3)-MaxPool(2)-FC(16)-Softmax(3)"
SHAPE = (1, 8, 8)


def toy(n, seed):
    """Three classes: a bright bar in the top, middle or bottom rows."""
    rng = np.random.default_rng(seed)
    y = rng.integers(3, size=n)
    x = rng.normal(0, 0.2, size=(n, *SHAPE))
    for i, c in enumerate(y):
        x[i, 0, 1 + 2 * c: 3 + 2 * c] += 1.0
    return Dataset(x, one_hot(y, 3), name=f"toy{seed}")


@pytest.fixture(scope="module")
def data():
    return toy(300, 0), toy(150, 1)


@pytest.fixture(scope="module")
def teacher(data):
    train, test = data
    net, metrics = train_teacher(init_network(ARCH, SHAPE, seed=0), train, test,
                                 TrainConfig(max_epochs=6, batch_size=16, seed=0))
    return net, metrics


# ------------------------------------------------------------- stopping rule

def test_should_stop_flat():
    assert should_stop([0.5, 0.5, 0.5, 0.5], 1e-4, 3)


def test_should_stop_fast_decrease():
    for tol in (0.4, 0.1, 1e-4):
        assert not should_stop([1.0, 0.5, 0.25], tol, 1)


def test_should_stop_short_history():
    assert not should_stop([0.5, 0.5, 0.5], 1e-4, 3)
    assert not should_stop([], 1e-4, 1)


def test_should_stop_only_recent_window():
    assert should_stop([5.0, 1.0, 1.0, 1.0], 1e-4, 2)
    assert not should_stop([1.0, 1.0, 1.0, 0.9], 1e-4, 2)


def test_should_stop_zero_loss_guard():
    assert should_stop([0.0, 0.0], 1e-4, 1)


# ---------------------------------------------------------------- evaluate

class _Const:
    def __init__(self, k, cls):
        self.k, self.cls = k, cls

    def predict(self, x, temperature=1.0, batch_size=256):
        p = np.zeros((len(x), self.k))
        p[:, self.cls] = 1
        return p


def test_evaluate_base_rate():
    labels = np.repeat(np.arange(10), 10)
    ds = Dataset(np.zeros((100, 1, 2, 2)), one_hot(labels, 10))
    assert evaluate(_Const(10, 3), ds) == (0.1, 90)


def test_evaluate_ties_lowest_class():
    ds = Dataset(np.zeros((2, 1, 2, 2)), one_hot([0, 1], 2))

    class Tie:
        def predict(self, x, temperature=1.0, batch_size=256):
            return np.full((len(x), 2), 0.5)

    assert evaluate(Tie(), ds) == (0.5, 1)


def test_evaluate_perfect(data):
    _, test = data

    class Oracle:
        def predict(self, x, temperature=1.0, batch_size=256):
            return test.labels

    assert evaluate(Oracle(), test) == (1.0, 0)


def test_evaluate_errors_accuracy_consistent():
    acc, err = 0.991, 90
    assert round((1 - acc) * 10_000) == err


def test_evaluate_empty_and_unlabeled():
    with pytest.raises(ValueError):
        evaluate(_Const(2, 0), Dataset(np.zeros((0, 1, 2, 2)), np.zeros((0, 2))))
    with pytest.raises(ValueError):
        evaluate(_Const(2, 0), Dataset(np.zeros((3, 1, 2, 2))))


# -------------------------------------------------------------- soft labels

def test_soft_labels_zero_teacher_uniform():
    net = init_network("Conv(2,3,3)-Softmax(10)", SHAPE, seed=0)
    for t in net.parameters():
        t.data[...] = 0
    p = cache_soft_labels(net, gen_uniform_noise(5, SHAPE))
    np.testing.assert_allclose(p, 0.1, atol=1e-7)


def test_soft_labels_match_forward(teacher):
    net, _ = teacher
    stim = gen_uniform_noise(7, SHAPE, seed=3)
    p = cache_soft_labels(net, stim, temperature=2.0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_array_equal(p, cache_soft_labels(net, stim, temperature=2.0))
    np.testing.assert_allclose(p[4], net.forward(stim.images[4:5], 2.0)[0], rtol=1e-6)


def test_soft_labels_shape_error(teacher):
    with pytest.raises(ShapeError):
        cache_soft_labels(teacher[0], gen_uniform_noise(2, (1, 9, 9)))


# ------------------------------------------------------------------ training

def test_teacher_learns_toy(teacher):
    _, metrics = teacher
    assert metrics.final_accuracy > 0.9
    assert [r.epoch for r in metrics.records] == list(range(1, len(metrics) + 1))
    assert all(np.isfinite(r.train_loss) and r.train_loss >= 0 for r in metrics.records)
    assert all(0 <= a <= 1 for a in metrics.accuracies)


def test_teacher_null_training(data):
    train, test = data
    net = init_network(ARCH, SHAPE, seed=4)
    before = evaluate(net, test)
    _, metrics = train_teacher(net, train, test, TrainConfig(lr=0.0, max_epochs=2))
    assert metrics.accuracies == [before[0]] * 2


def test_teacher_rejects_unlabeled(data):
    train, test = data
    with pytest.raises(ValueError):
        train_teacher(init_network(ARCH, SHAPE), train.unlabeled(), test, TrainConfig())
    with pytest.raises(ValueError):
        train_teacher(init_network("Softmax(4)", SHAPE), train, test, TrainConfig())


def test_teacher_determinism(data):
    train, test = data

    def run():
        net, m = train_teacher(init_network(ARCH, SHAPE, seed=2), train, test,
                               TrainConfig(max_epochs=2, seed=5))
        return net.checksum(), [(r.epoch, r.train_loss, r.test_acc) for r in m.records]

    assert run() == run()


def test_early_stop_flag(data):
    train, test = data
    _, m = train_teacher(init_network(ARCH, SHAPE, seed=2), train, test,
                         TrainConfig(lr=0.0, max_epochs=10, stop_patience=2))
    assert len(m) == 3 and m.stopped_early


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_loss_raises(data):
    train, test = data
    with pytest.raises(TrainingError):
        train_teacher(init_network(ARCH, SHAPE, seed=0), train, test,
                      TrainConfig(lr=1e36, momentum=0.0, max_epochs=5))


def test_config_validation():
    for bad in (dict(lr=-1), dict(momentum=1.0), dict(batch_size=0), dict(max_epochs=0),
                dict(beta=-0.5), dict(temperature=0), dict(stop_tol=0), dict(stop_patience=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_self_distillation_toy(data, teacher):
    train, test = data
    net, _ = teacher
    checksum = net.checksum()
    student, m = distill_data_free(net, init_network(ARCH, SHAPE, seed=9), train.unlabeled(), test,
                                   TrainConfig(max_epochs=8, batch_size=16))
    assert net.checksum() == checksum  # teacher frozen
    assert m.losses[-1] <= m.losses[0]
    assert m.final_accuracy >= evaluate(net, test)[0] - 0.05
    pt = cache_soft_labels(net, train)
    entropy = cross_entropy(pt, pt)
    assert cross_entropy(pt, student.predict(train.images)) < entropy + 0.1


def test_distill_errors(data, teacher):
    _, test = data
    net, _ = teacher
    with pytest.raises(ValueError):
        distill_data_free(net, init_network(ARCH, SHAPE), Dataset(np.zeros((0, *SHAPE))), test,
                          TrainConfig())
    with pytest.raises(ValueError):
        distill_data_free(net, init_network("Softmax(4)", SHAPE), gen_uniform_noise(3, SHAPE),
                          test, TrainConfig())


def test_augmented_beta_zero_reduces_to_data_free(data, teacher):
    _, test = data
    net, _ = teacher
    stim = gen_uniform_noise(50, SHAPE, seed=1)
    cfg = TrainConfig(max_epochs=2, beta=0.0, batch_size=8)
    empty = Dataset(np.zeros((0, *SHAPE)), np.zeros((0, 3)))
    a, ma = distill_augmented(net, init_network(ARCH, SHAPE, seed=3), empty, stim, test, cfg)
    b, mb = distill_data_free(net, init_network(ARCH, SHAPE, seed=3), stim, test, cfg)
    assert a.checksum() == b.checksum()
    assert ma.losses == mb.losses


def test_augmented_runs_and_freezes_teacher(data, teacher):
    train, test = data
    net, _ = teacher
    checksum = net.checksum()
    student, m = distill_augmented(net, init_network(ARCH, SHAPE, seed=3), train.head(30),
                                   gen_uniform_noise(60, SHAPE, seed=2), test,
                                   TrainConfig(max_epochs=3, batch_size=16))
    assert net.checksum() == checksum
    assert len(m) == 3 and all(l >= 0 for l in m.losses)


def test_augmented_rejects_labeled_stimulus(data, teacher):
    train, test = data
    with pytest.raises(ValueError):
        distill_augmented(teacher[0], init_network(ARCH, SHAPE), train.head(5), train.head(5),
                          test, TrainConfig(max_epochs=1))
