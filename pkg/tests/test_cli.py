import numpy as np
import pytest

from bandex.audio_io import SignalBuffer, read_wav, write_wav
from bandex.cli import main
from bandex.predictors import ModelBundle, save_model, zero_predictor
from bandex.synth import make_corpus, synth_utterance


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli_corpus")
    make_corpus(d, 2, seed=7, duration=1.5)
    return d


@pytest.fixture()
def zero_model(tmp_path):
    p = tmp_path / "zero.bxm"
    save_model(ModelBundle(zero_predictor(8), zero_predictor(2)), p)
    return p


@pytest.fixture()
def tel_wav(tmp_path):
    p = tmp_path / "in.wav"
    s16 = synth_utterance(1, 0.5)
    write_wav(p, SignalBuffer(s16[::2], 8000))
    return p


class TestUsage:
    def test_unknown_command(self):
        with pytest.raises(SystemExit) as e:
            main(["bogus"])
        assert e.value.code == 1

    def test_missing_required(self):
        with pytest.raises(SystemExit) as e:
            main(["extend", "--in", "x.wav"])
        assert e.value.code == 1

    def test_bad_hidden(self, tmp_path):
        with pytest.raises(SystemExit) as e:
            main(["train", "--corpus", str(tmp_path), "--out", str(tmp_path / "m"), "--hidden", "a,b"])
        assert e.value.code == 1

    def test_bad_config(self, tmp_path, tel_wav, zero_model):
        cfg = tmp_path / "c.txt"
        cfg.write_text("bogus = 1\n")
        rc = main(["extend", "--in", str(tel_wav), "--out", str(tmp_path / "o.wav"), "--model", str(zero_model),
                   "--config", str(cfg)])
        assert rc == 1

    def test_no_model(self, tmp_path, tel_wav):
        assert main(["extend", "--in", str(tel_wav), "--out", str(tmp_path / "o.wav")]) == 1


class TestExtend:
    def test_success(self, tmp_path, tel_wav, zero_model):
        out = tmp_path / "o.wav"
        assert main(["extend", "--in", str(tel_wav), "--out", str(out), "--model", str(zero_model)]) == 0
        y = read_wav(out)
        assert y.sample_rate == 16000 and y.samples.size == 2 * read_wav(tel_wav).samples.size

    def test_no_irs_inverse(self, tmp_path, tel_wav, zero_model):
        a, b = tmp_path / "a.wav", tmp_path / "b.wav"
        assert main(["extend", "--in", str(tel_wav), "--out", str(a), "--model", str(zero_model)]) == 0
        assert main(["extend", "--in", str(tel_wav), "--out", str(b), "--model", str(zero_model),
                     "--no-irs-inverse"]) == 0
        assert not np.array_equal(read_wav(a).samples, read_wav(b).samples)

    def test_missing_input(self, tmp_path, zero_model):
        rc = main(["extend", "--in", str(tmp_path / "none.wav"), "--out", str(tmp_path / "o.wav"),
                   "--model", str(zero_model)])
        assert rc == 2

    def test_corrupt_model(self, tmp_path, tel_wav):
        bad = tmp_path / "bad.bxm"
        bad.write_bytes(b"not a model")
        assert main(["extend", "--in", str(tel_wav), "--out", str(tmp_path / "o.wav"), "--model", str(bad)]) == 2

    def test_wrong_rate(self, tmp_path, zero_model):
        p = tmp_path / "w.wav"
        write_wav(p, SignalBuffer(np.zeros(800), 16000))
        assert main(["extend", "--in", str(p), "--out", str(tmp_path / "o.wav"), "--model", str(zero_model)]) == 2


class TestTrainEval:
    def test_train_then_eval(self, corpus, tmp_path, capsys):
        m = tmp_path / "m.bxm"
        rc = main(["train", "--corpus", str(corpus), "--out", str(m), "--predictor", "regression", "--seed", "3"])
        assert rc == 0 and m.exists()
        assert (tmp_path / "m.bxm.report.txt").exists()
        rc = main(["eval", "--corpus", str(corpus), "--model", str(m), "--report", str(tmp_path / "r.txt"),
                   "--frames", str(tmp_path / "f.csv")])
        assert rc == 0
        assert "high-band SD" in (tmp_path / "r.txt").read_text()
        assert len((tmp_path / "f.csv").read_text().splitlines()) > 10

    def test_empty_corpus(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main(["train", "--corpus", str(tmp_path / "empty"), "--out", str(tmp_path / "m.bxm")]) == 2

    def test_too_little_data(self, tmp_path):
        d = tmp_path / "tiny"
        d.mkdir()
        write_wav(d / "t.wav", SignalBuffer(synth_utterance(2, 0.1), 16000))
        assert main(["train", "--corpus", str(d), "--out", str(tmp_path / "m.bxm")]) == 3


class TestDesign:
    def test_default_table(self, tmp_path):
        out = tmp_path / "inv.txt"
        assert main(["design-irs-inverse", "--half-order", "30", "--out", str(out)]) == 0
        h = np.loadtxt(out)
        assert h.size == 61
        np.testing.assert_allclose(h, h[::-1], atol=1e-12)

    def test_missing_table(self, tmp_path):
        rc = main(["design-irs-inverse", "--irs-table", str(tmp_path / "none.txt"), "--out", str(tmp_path / "o")])
        assert rc == 2
