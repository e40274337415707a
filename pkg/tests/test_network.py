import numpy as np
import pytest

from approxmram.memory import ApproxWeightStore, FixedPointFormat, ProgrammingProfile, Uniform, make_profile, quantize, dequantize
from approxmram.mnist import Dataset, load_dataset
from approxmram.network import (
    LAYER_SIZES,
    REPORT_HEADER,
    TrainConfig,
    build_store,
    forward,
    gradients,
    init_params,
    loss,
    one_hot_pm1,
    parameter_count,
    predict,
    report_csv,
    train_and_evaluate,
    train_run,
    accuracy,
)

TOY = (6, 4, 3)


def test_parameter_count():
    assert parameter_count() == 238_510
    assert parameter_count(TOY) == 6 * 4 + 4 + 4 * 3 + 3


def test_zero_weights_predict_class_zero():
    params = np.zeros(parameter_count())
    x = np.random.default_rng(0).random((5, 784))
    assert np.all(forward(params, x) == 0.0)
    assert np.all(predict(params, x) == 0)


def test_init_range_and_zero_biases():
    params = init_params(np.random.default_rng(0))
    w1 = params[:784 * 300]
    limit = np.sqrt(6 / 1084)
    assert np.abs(w1).max() <= limit
    assert np.all(params[784 * 300:784 * 300 + 300] == 0)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    params = rng.normal(0, 0.5, parameter_count(TOY))
    x = rng.random((5, 6))
    targets = one_hot_pm1(rng.integers(0, 3, 5), 3)
    grad = gradients(params, x, targets, TOY)
    h = 1e-5
    numeric = np.empty_like(params)
    for i in range(params.size):
        up, down = params.copy(), params.copy()
        up[i] += h
        down[i] -= h
        numeric[i] = (loss(up, x, targets, TOY) - loss(down, x, targets, TOY)) / (2 * h)
    rel = np.abs(grad - numeric) / np.maximum(np.abs(numeric), 1e-3)
    assert rel.max() < 1e-6


def test_one_hot_targets():
    t = one_hot_pm1([2, 0], 3)
    assert t.tolist() == [[-1, -1, 1], [1, -1, -1]]


def _toy_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 784))
    labels = (x[:, :10].argmax(axis=1)).astype(np.uint8)
    return Dataset(x, labels, "train")


def test_chance_level_untrained(mnist_dir):
    test = load_dataset(mnist_dir, "test")
    params = init_params(np.random.default_rng(1))
    assert abs(accuracy(params, test) - 0.10) <= 0.05


def test_ber_one_freezes_weights():
    data = _toy_data()
    config = TrainConfig(epochs=2, n_seeds=1)
    store, _ = build_store(config, ProgrammingProfile.ideal(1.0), seed=5)
    init = store.words.copy()
    result = train_run(config, ProgrammingProfile.ideal(1.0), data, data, seed=5)
    store_after, _ = build_store(config, ProgrammingProfile.ideal(1.0), seed=5)
    assert np.array_equal(store_after.words, init)
    # the run itself never changed a word: same accuracy as the initial weights
    assert result.recognition_rate == accuracy(dequantize(init, config.fmt), data)
    assert result.writes == 2 * (len(data) // 10) * parameter_count()


def test_ber_zero_matches_dense_reference():
    data = _toy_data(120)
    config = TrainConfig(epochs=2, n_seeds=1, learning_rate=0.05)
    fmt = config.fmt
    result = train_run(config, ProgrammingProfile.ideal(0.0), data, data, seed=9)

    # dense reference: float vector, quantize at every write, same streams
    from approxmram.network import seed_streams
    init_rng, shuffle_rng, _ = seed_streams(9)
    w = dequantize(quantize(init_params(init_rng), fmt), fmt)
    targets = one_hot_pm1(data.labels)
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(len(data))
        for s in range(0, len(data), config.minibatch):
            idx = order[s:s + config.minibatch]
            w = dequantize(quantize(w - config.learning_rate * gradients(w, data.images[idx], targets[idx]), fmt), fmt)
    assert result.recognition_rate == accuracy(w, data)


def test_repeated_runs_are_identical(models):
    data = _toy_data(150)
    config = TrainConfig(epochs=1, n_seeds=2)
    profile = make_profile(Uniform(0.1), models)
    base = make_profile(Uniform(1e-10), models).word_energy_pj
    a = train_and_evaluate(config, profile, data, data, baseline_word_energy=base)
    b = train_and_evaluate(config, profile, data, data, baseline_word_energy=base)
    assert a == b
    assert report_csv([a]) == report_csv([b])
    s1, _ = build_store(config, profile, 3)
    s2, _ = build_store(config, profile, 3)
    assert s1.words.tobytes() == s2.words.tobytes()


def test_report_fields(models):
    data = _toy_data(100)
    config = TrainConfig(epochs=1, n_seeds=3, seed=7)
    profile = make_profile(Uniform(1e-2), models)
    base = make_profile(Uniform(1e-10), models).word_energy_pj
    r = train_and_evaluate(config, profile, data, data, baseline_word_energy=base)
    assert r.seeds == (7, 8, 9)
    assert r.recognition_rate == pytest.approx(np.mean(r.per_seed_rates))
    assert r.energy_per_weight_pj == pytest.approx(r.total_programming_energy_pj / parameter_count())
    assert r.energy_per_weight_pj == pytest.approx(10 * profile.word_energy_pj)
    assert r.energy_saving_vs_baseline == pytest.approx(1 - profile.word_energy_pj / base)
    header, row = report_csv([r]).splitlines()
    assert header.split(",") == REPORT_HEADER
    assert row.startswith("uniform,0,0.01,0.01,3,")


def test_config_validation():
    for bad in ({"minibatch": 0}, {"epochs": 0}, {"n_seeds": 0}, {"learning_rate": 0.0}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    assert TrainConfig().fmt == FixedPointFormat(fractional_bits=12, encoding="sign_magnitude")


def test_short_training_learns(mnist_dir, models):
    train = load_dataset(mnist_dir, "train").subset(5000)
    test = load_dataset(mnist_dir, "test").subset(2000)
    result = train_run(TrainConfig(epochs=1), make_profile(Uniform(1e-10), models), train, test, seed=0)
    assert result.recognition_rate > 0.75
