"""Smoke tests for the python bindings: shapes, determinism, round trips."""

import numpy as np
import pytest

import pertfool


@pytest.fixture(scope="module")
def tiny_setup():
    images, labels = pertfool.gen_digits(per_class=12, seed=7, split="train")
    test_images, test_labels = pertfool.gen_digits(per_class=4, seed=8, split="test")
    net = pertfool.Classifier.reference(10, 28, 28, 1, seed=3)
    rep = pertfool.train(net, images, labels, test_images, test_labels,
                         epochs=1, batch=16, lr=0.05, seed=3)
    return net, images, labels, rep


def test_dataset_shapes():
    images, labels = pertfool.gen_digits(per_class=3, seed=1)
    assert images.shape == (30, 28, 28, 1)
    assert len(labels) == 30
    assert images.min() >= 0.0 and images.max() <= 255.0
    assert sorted(set(labels)) == list(range(10))


def test_dataset_determinism():
    a, _ = pertfool.gen_digits(per_class=2, seed=5)
    b, _ = pertfool.gen_digits(per_class=2, seed=5)
    c, _ = pertfool.gen_digits(per_class=2, seed=6)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_forward_and_gradient(tiny_setup):
    net, images, labels, _ = tiny_setup
    logits = net.forward(images[0])
    assert logits.shape == (10,)
    label, conf = net.predict(images[0])
    assert 0 <= label < 10
    assert 0.0 <= conf <= 1.0
    grad = net.input_gradient(images[0], int(labels[0]))
    assert grad.shape == (28, 28, 1)
    assert np.isfinite(grad).all()
    omega = net.conv_base_activations(images[0])
    assert omega.shape == (7, 7, 32)


def test_training_determinism(tiny_setup):
    _, images, labels, _ = tiny_setup
    test_images, test_labels = pertfool.gen_digits(per_class=2, seed=9, split="test")
    n1 = pertfool.Classifier.reference(10, 28, 28, 1, seed=11)
    n2 = pertfool.Classifier.reference(10, 28, 28, 1, seed=11)
    pertfool.train(n1, images, labels, test_images, test_labels, epochs=1, seed=4)
    pertfool.train(n2, images, labels, test_images, test_labels, epochs=1, seed=4)
    x = images[5]
    assert np.array_equal(n1.forward(x), n2.forward(x))


def test_checkpoint_roundtrip(tiny_setup, tmp_path):
    net, images, _, _ = tiny_setup
    path = str(tmp_path / "model.pfnn")
    net.save(path)
    back = pertfool.Classifier.load(path)
    assert np.array_equal(net.forward(images[3]), back.forward(images[3]))


def test_fool_attack_deterministic(tiny_setup):
    net, images, labels, _ = tiny_setup
    labels = np.asarray(labels)
    source_images = images[labels == 0]
    nonsource = images[labels != 0]
    nonsource_labels = [int(v) for v in labels[labels != 0]]

    def run():
        return pertfool.fool(net, source_images, nonsource, nonsource_labels,
                             target=8, source=0, mode="unbounded", gamma=0.9,
                             batch=8, max_iters=12, eval_every=4, seed=13)

    p1, t1 = run()
    p2, t2 = run()
    assert np.array_equal(p1.data, p2.data)
    assert t1["rows"][-1]["ratio"] == t2["rows"][-1]["ratio"]
    best = [r["best_ratio"] for r in t1["rows"]]
    assert best == sorted(best)


def test_perturbation_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    p = pertfool.Perturbation.from_array(rng.normal(size=(28, 28, 1)), mode="linf", eta=10.0)
    path = str(tmp_path / "p.pfpt")
    p.save(path)
    back = pertfool.Perturbation.load(path)
    assert back.mode == "linf"
    assert back.eta == 10.0
    assert np.array_equal(back.data, p.data)


def test_refine_and_viz(tiny_setup):
    net, _, _, _ = tiny_setup
    rng = np.random.default_rng(1)
    p = rng.uniform(-20, 20, size=(28, 28, 1))
    r = pertfool.refine(net, p)
    assert r["p"].shape == (28, 28, 1)
    assert np.abs(r["p"]).max() <= 255.0
    viz = pertfool.visualization_image(p)
    assert viz.min() >= 0.0 and viz.max() <= 255.0
    zero_viz = pertfool.visualization_image(np.zeros((28, 28, 1)))
    assert (zero_viz == 128.0).all()


def test_report_keys(tiny_setup):
    net, images, labels, _ = tiny_setup
    p = pertfool.Perturbation.from_array(np.zeros((28, 28, 1)))
    rep = pertfool.report(net, p, images, [int(v) for v in labels], source=0, target=8)
    assert set(rep) >= {"fooling_ratio", "leakage", "per_class_target_rate",
                        "n_source", "n_nonsource", "linf", "l2"}
    assert 0.0 <= rep["fooling_ratio"] <= 1.0
    assert 8 not in rep["per_class_target_rate"]


def test_gaussian_inputs():
    images, labels = pertfool.gen_digits(per_class=6, seed=2)
    labels = np.asarray(labels)
    target_images = images[labels == 5]
    seed_img, pool = pertfool.gaussian_inputs(target_images, count=4, seed=3)
    assert seed_img.shape == (28, 28, 1)
    assert len(pool) == 3
    assert seed_img.min() >= 0.0 and seed_img.max() <= 255.0


def test_explain_short(tiny_setup):
    net, images, labels, _ = tiny_setup
    labels = np.asarray(labels)
    pool = images[labels != 8][:16]
    seed_img = pool[0]
    p, trace = pertfool.explain(net, pool[1:], seed_img, target=8, batch=4,
                                refine_every=3, refine_until=6, max_iters=5, seed=21)
    assert p.data.shape == (28, 28, 1)
    events = [e["event"] for e in trace["events"]]
    assert sum(e.startswith("refine") for e in events) == 3  # phase B + 2 in phase C
