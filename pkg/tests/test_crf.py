import itertools
import math

import numpy as np
import pytest

from seqtag.corpus import Corpus, Scheme, Sentence, Token
from seqtag.crf import (
    CrfModel,
    EmptyCorpus,
    FormatError,
    Lattice,
    TrainConfig,
    UnknownLabel,
    _batch_backward,
    _batch_forward,
    load_model,
    log_partition,
    log_potentials,
    nll_and_gradient,
    save_model,
    tag_corpus,
    train,
    viterbi,
)
from seqtag.features import FeatureIndex, default_templates, extract_features
from conftest import make_sentence, sample_corpus, synthetic_training_corpus


def zero_model(labels=("O", "I-PER", "I-ORG"), features=(), templates=("bias", "w0")):
    index = FeatureIndex(features)
    return CrfModel(
        labels=labels,
        scheme=Scheme.IO,
        feature_index=index,
        obs_weights=np.zeros((len(index), len(labels))),
        trans_weights=np.zeros((len(labels), len(labels))),
        templates=templates,
    )


def random_model_and_batch(rng, max_len=4, n_labels=3, n_sentences=3, scale=0.8):
    labels = ("O", "I-AA", "I-BB", "I-CC")[:n_labels]
    templates = ("bias", "w0", "suf2", "cap")
    vocab = ["alpha", "Beta", "gam", "de", "Ep", "zo-1"]
    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(1, max_len + 1))
        sentences.append(Sentence(tuple(
            Token(vocab[int(rng.integers(len(vocab)))], labels[int(rng.integers(n_labels))])
            for _ in range(length)
        )))
    index = FeatureIndex()
    for s in sentences:
        for feats in extract_features(s, templates):
            for f in feats:
                index.add(f)
    model = CrfModel(
        labels=labels,
        scheme=Scheme.IO,
        feature_index=index,
        obs_weights=rng.normal(0.0, scale, (len(index), n_labels)),
        trans_weights=rng.normal(0.0, scale, (n_labels, n_labels)),
        templates=templates,
    )
    return model, [(s, s.tags) for s in sentences]


def brute_force_paths(node, trans):
    T, K = node.shape
    for path in itertools.product(range(K), repeat=T):
        score = node[0, path[0]]
        for t in range(1, T):
            score = score + trans[path[t - 1], path[t]] + node[t, path[t]]
        yield score, path


class TestLogPotentials:
    def test_zero_weights_zero_lattice(self):
        model = zero_model(features=["bias", "w0=oui"])
        sentence = make_sentence(["Oui"], ["O"])
        lattice = log_potentials(model, extract_features(sentence, model.templates))
        assert np.all(lattice.node == 0.0)

    def test_single_bias_feature(self):
        model = zero_model(features=["bias"])
        model.obs_weights[0, 0] = 2.0
        sentence = make_sentence(["a", "b", "c"], ["O", "O", "O"])
        lattice = log_potentials(model, extract_features(sentence, ("bias",)))
        assert np.allclose(lattice.node[:, 0], 2.0)
        assert np.all(lattice.node[:, 1:] == 0.0)

    def test_matches_naive_recomputation(self, rng):
        for _ in range(20):
            model, batch = random_model_and_batch(rng)
            for sentence, _ in batch:
                features = extract_features(sentence, model.templates)
                lattice = log_potentials(model, features)
                for t, feats in enumerate(features):
                    expected = np.zeros(len(model.labels))
                    for f in feats:
                        if f in model.feature_index:
                            expected += model.obs_weights[model.feature_index.ids[f]]
                    assert np.allclose(lattice.node[t], expected, atol=1e-12)

    def test_unseen_features_contribute_zero(self):
        model = zero_model(features=["bias"])
        model.obs_weights[0, :] = 1.0
        lattice = log_potentials(model, [["bias", "w0=inconnu"]])
        assert np.allclose(lattice.node, 1.0)


class TestLogPartition:
    def test_uniform_single_position(self):
        assert log_partition(Lattice(np.zeros((1, 3)), np.zeros((3, 3)))) == pytest.approx(
            math.log(3), abs=1e-12
        )

    def test_uniform_chain(self):
        assert log_partition(Lattice(np.zeros((3, 3)), np.zeros((3, 3)))) == pytest.approx(
            3 * math.log(3), abs=1e-12
        )

    def test_matches_brute_force(self, rng):
        for _ in range(100):
            T, K = int(rng.integers(1, 5)), int(rng.integers(1, 4))
            lattice = Lattice(rng.normal(0, 2, (T, K)), rng.normal(0, 2, (K, K)))
            scores = [s for s, _ in brute_force_paths(lattice.node, lattice.trans)]
            m = max(scores)
            expected = m + math.log(sum(math.exp(s - m) for s in scores))
            assert log_partition(lattice) == pytest.approx(expected, rel=1e-10)

    def test_dominates_any_single_path(self, rng):
        for _ in range(20):
            T, K = int(rng.integers(1, 5)), int(rng.integers(2, 4))
            lattice = Lattice(rng.normal(0, 2, (T, K)), rng.normal(0, 2, (K, K)))
            log_z = log_partition(lattice)
            assert all(log_z > s for s, _ in brute_force_paths(lattice.node, lattice.trans))

    def test_posterior_marginals_sum_to_one(self, rng):
        for _ in range(20):
            T, K = int(rng.integers(1, 6)), int(rng.integers(1, 4))
            node = rng.normal(0, 2, (1, T, K))
            trans = rng.normal(0, 2, (K, K))
            alpha, log_z = _batch_forward(node, trans)
            beta = _batch_backward(node, trans)
            posterior = np.exp(alpha + beta - log_z[:, None, None])
            assert np.allclose(posterior.sum(axis=2), 1.0, atol=1e-12)


class TestGradient:
    def test_zero_weights_uniform_objective(self):
        model = zero_model(labels=("O", "I-PER", "I-ORG"))
        sentence = make_sentence(["a", "b", "c", "d"], ["O"] * 4)
        objective, _ = nll_and_gradient(model, [(sentence, sentence.tags)], 0.0)
        assert objective == pytest.approx(4 * math.log(3), abs=1e-12)

    def test_single_label_gradient_vanishes(self):
        model = zero_model(labels=("O",), features=["bias", "w0=a"])
        model.obs_weights[:] = np.array([[1.5], [-0.5]])
        sentence = make_sentence(["a", "a"], ["O", "O"])
        objective, (g_obs, g_trans) = nll_and_gradient(model, [(sentence, sentence.tags)], 0.0)
        assert objective == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(g_obs, 0.0, atol=1e-12)
        assert np.allclose(g_trans, 0.0, atol=1e-12)

    def test_unknown_label(self):
        model = zero_model(labels=("O",))
        sentence = make_sentence(["a"], ["I-PER"])
        with pytest.raises(UnknownLabel):
            nll_and_gradient(model, [(sentence, sentence.tags)], 0.0)

    def test_matches_finite_differences(self, rng):
        h = 1e-4
        for _ in range(10):
            model, batch = random_model_and_batch(rng)
            l2 = float(rng.uniform(0.0, 2.0))
            _, (g_obs, g_trans) = nll_and_gradient(model, batch, l2)
            for array, grad in ((model.obs_weights, g_obs), (model.trans_weights, g_trans)):
                it = np.nditer(array, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    original = array[idx]
                    array[idx] = original + h
                    up = nll_and_gradient(model, batch, l2)[0]
                    array[idx] = original - h
                    down = nll_and_gradient(model, batch, l2)[0]
                    array[idx] = original
                    fd = (up - down) / (2 * h)
                    assert abs(grad[idx] - fd) <= 1e-5 * max(1.0, abs(grad[idx]), abs(fd))

    def test_l2_term(self, rng):
        model, batch = random_model_and_batch(rng)
        base, (g0_obs, g0_trans) = nll_and_gradient(model, batch, 0.0)
        reg, (g1_obs, g1_trans) = nll_and_gradient(model, batch, 2.0)
        norm_sq = float(np.sum(model.obs_weights ** 2) + np.sum(model.trans_weights ** 2))
        assert reg == pytest.approx(base + norm_sq, rel=1e-12)
        assert np.allclose(g1_obs - g0_obs, 2.0 * model.obs_weights)
        assert np.allclose(g1_trans - g0_trans, 2.0 * model.trans_weights)


class TestTrain:
    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            train(Corpus((), Scheme.IO, validated=True))

    def test_label_set_ordering(self):
        corpus = sample_corpus(Scheme.BIOES)
        model = train(corpus, TrainConfig(max_iter=1))
        assert model.labels[0] == "O"
        assert list(model.labels[1:]) == sorted(model.labels[1:])
        assert set(model.labels) == {"O", "S-PER", "B-ORG", "I-ORG", "E-ORG"}

    def test_memorizes_single_sentence(self):
        corpus = sample_corpus(Scheme.BIOES)
        model = train(corpus, TrainConfig(l2_lambda=0.0, max_iter=300, tol=1e-12))
        sentence = corpus.sentences[0]
        assert viterbi(model, sentence) == list(sentence.tags)
        nll, _ = nll_and_gradient(model, [(sentence, sentence.tags)], 0.0)
        assert nll / len(sentence) < 0.01

    def test_objective_monotone_over_accepted_iterations(self):
        corpus = synthetic_training_corpus(n_sentences=40)
        objectives = []
        train(
            corpus,
            TrainConfig(l2_lambda=0.1, max_iter=25, tol=1e-10),
            on_iteration=lambda i, obj, step: objectives.append(obj),
        )
        assert objectives == sorted(objectives, reverse=True)
        assert len(set(objectives)) == len(objectives)

    def test_training_is_deterministic(self):
        corpus = synthetic_training_corpus(n_sentences=30)
        cfg = TrainConfig(l2_lambda=0.1, max_iter=15)
        m1 = train(corpus, cfg)
        m2 = train(corpus, cfg)
        assert np.array_equal(m1.obs_weights, m2.obs_weights)
        assert np.array_equal(m1.trans_weights, m2.trans_weights)

    def test_learns_small_corpus(self):
        corpus = synthetic_training_corpus(n_sentences=60)
        model = train(corpus, TrainConfig(l2_lambda=0.1, max_iter=40, tol=1e-9))
        predicted = tag_corpus(model, corpus)
        correct = sum(
            g == p
            for gs, ps in zip(corpus, predicted)
            for g, p in zip(gs.tags, ps.tags)
        )
        assert correct / corpus.n_tokens > 0.9

    def test_label_count_follows_scheme_formula(self):
        # corpus exercising every tag of each scheme for its entity types
        from seqtag.schemes import convert, full_tag_set

        base = synthetic_training_corpus(n_sentences=150)  # spans of length 1-3
        for scheme, expected in ((Scheme.IO, 3 + 1), (Scheme.BIO, 2 * 3 + 1),
                                 (Scheme.BIOES, 4 * 3 + 1)):
            corpus = convert(base, scheme)
            observed = {t.tag for s in corpus for t in s}
            assert observed == set(full_tag_set(["PER", "LOC", "ORG"], scheme))
            model = train(corpus, TrainConfig(max_iter=1))
            assert len(model.labels) == expected


class TestViterbi:
    def test_all_zero_model_decodes_outside(self):
        model = zero_model()
        sentence = make_sentence(["Un", "chat", "dort"], ["O", "O", "O"])
        assert viterbi(model, sentence) == ["O", "O", "O"]

    def test_matches_brute_force_max(self, rng):
        for _ in range(50):
            model, batch = random_model_and_batch(rng, max_len=5, n_labels=4)
            for sentence, _ in batch:
                lattice = log_potentials(model, extract_features(sentence, model.templates))
                label_ids = model.label_ids
                predicted = viterbi(model, sentence)
                path_ids = tuple(label_ids[t] for t in predicted)
                scores = dict()
                best = None
                for score, path in brute_force_paths(lattice.node, lattice.trans):
                    scores[path] = score
                    if best is None or score > scores[best]:
                        best = path
                assert scores[path_ids] == scores[best]

    def test_tie_break_prefers_lowest_index(self):
        # two labels scored identically everywhere: index 0 ("O") must win
        model = zero_model(labels=("O", "I-PER"), features=["bias"])
        model.obs_weights[0, :] = 1.0
        sentence = make_sentence(["a", "b"], ["O", "O"])
        assert viterbi(model, sentence) == ["O", "O"]

    def test_output_length(self, rng):
        model, batch = random_model_and_batch(rng)
        for sentence, _ in batch:
            assert len(viterbi(model, sentence)) == len(sentence)


class TestPersistence:
    def test_round_trip_trained_model(self, tmp_path, rng):
        corpus = synthetic_training_corpus(n_sentences=30)
        model = train(corpus, TrainConfig(l2_lambda=0.1, max_iter=10))
        path = tmp_path / "model.txt"
        save_model(model, path)
        loaded = load_model(path)

        assert loaded.labels == model.labels
        assert loaded.scheme is model.scheme
        assert np.array_equal(loaded.trans_weights, model.trans_weights)
        assert loaded.templates == model.templates
        # identical decoding on fresh sentences
        for sentence in synthetic_training_corpus(n_sentences=10, seed=77):
            assert viterbi(loaded, sentence) == viterbi(model, sentence)

    def test_weights_bit_identical(self, tmp_path):
        corpus = sample_corpus(Scheme.BIOES)
        model = train(corpus, TrainConfig(max_iter=5))
        save_model(model, tmp_path / "m.txt")
        loaded = load_model(tmp_path / "m.txt")
        assert loaded.feature_index.ids.keys() == model.feature_index.ids.keys()
        for feature, fid in model.feature_index.ids.items():
            lid = loaded.feature_index.ids[feature]
            assert np.array_equal(loaded.obs_weights[lid], model.obs_weights[fid])

    def test_empty_model_round_trips(self, tmp_path):
        model = CrfModel(
            labels=("O", "I-PER"),
            scheme=Scheme.IO,
            feature_index=FeatureIndex(),
            obs_weights=np.zeros((0, 2)),
            trans_weights=np.array([[0.25, -1.5], [0.0, 3.0]]),
            templates=(),
        )
        save_model(model, tmp_path / "empty.txt")
        loaded = load_model(tmp_path / "empty.txt")
        assert loaded.labels == model.labels
        assert np.array_equal(loaded.trans_weights, model.trans_weights)
        assert len(loaded.feature_index) == 0

    def test_truncated_file(self, tmp_path):
        corpus = sample_corpus(Scheme.BIOES)
        model = train(corpus, TrainConfig(max_iter=3))
        path = tmp_path / "m.txt"
        save_model(model, path)
        data = path.read_bytes()
        truncated = tmp_path / "t.txt"
        truncated.write_bytes(data[: data.rfind(b"\t")])  # cut inside the last record
        with pytest.raises(FormatError):
            load_model(truncated)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("LABELS\tO\n")
        with pytest.raises(FormatError) as exc:
            load_model(path)
        assert exc.value.line_no == 1

    def test_bad_weight_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("SCHEME\tio\nLABELS\tO\nT\tO\tO\tnot-a-float\n")
        with pytest.raises(FormatError) as exc:
            load_model(path)
        assert exc.value.line_no == 3
