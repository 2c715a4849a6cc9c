import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mem2mem import autodiff as ad
from mem2mem.autodiff import ParamStore, Tensor
from mem2mem.memory import (
    MemoryWriter,
    comp_loss,
    compress,
    gated_update,
    read,
    read_loss,
    transfer,
)

from helpers import check_grads


class TestCompress:
    def test_rows_stochastic_and_slots_are_mixtures(self):
        rng = np.random.default_rng(0)
        H = Tensor(rng.normal(size=(2, 5, 4)))
        mask = np.array([[1, 1, 1, 1, 1], [1, 1, 0, 0, 0]], bool)
        bank = compress(H, Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(3, 2))), mask)
        A = bank.write_attention.data
        np.testing.assert_allclose(A.sum(axis=-1), 1.0, atol=1e-12)
        assert (A[1, :, 2:] == 0).all()
        np.testing.assert_allclose(bank.slots.data, A @ H.data, atol=1e-12)

    def test_single_sentence_copies_state(self):
        H = Tensor(np.arange(3.0).reshape(1, 1, 3))
        bank = compress(H, Tensor(np.ones((3, 2))), Tensor(np.ones((2, 4))))
        np.testing.assert_array_equal(bank.write_attention.data, np.ones((1, 4, 1)))
        np.testing.assert_array_equal(bank.slots.data[0], np.tile(H.data[0], (4, 1)))

    def test_hand_example(self):
        # one head, d_a = 1: score_j = w1 * tanh(w2 . h_j)
        H = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        W_a2 = np.array([[2.0], [-1.0]])
        W_a1 = np.array([[1.5]])
        s = 1.5 * np.tanh([2.0, -1.0])
        a = np.exp(s) / np.exp(s).sum()
        bank = compress(Tensor(H), Tensor(W_a2), Tensor(W_a1))
        np.testing.assert_allclose(bank.write_attention.data[0, 0], a, atol=1e-12)
        np.testing.assert_allclose(bank.slots.data[0, 0], a @ H[0], atol=1e-12)

    def test_no_heads(self):
        with pytest.raises(ValueError):
            compress(Tensor(np.ones((1, 2, 3))), Tensor(np.ones((3, 2))), Tensor(np.ones((2, 0))))


class TestCompLoss:
    def test_distinct_one_hot_rows(self):
        assert float(comp_loss(Tensor(np.eye(3, 5))).data) == 0.0

    def test_duplicated_one_hot(self):
        assert float(comp_loss(Tensor([[1.0, 0.0], [1.0, 0.0]])).data) == 2.0

    def test_uniform_single_head(self):
        assert float(comp_loss(Tensor([[0.5, 0.5]])).data) == pytest.approx(0.25, abs=1e-15)

    def test_batch_mean(self):
        A = np.stack([np.eye(2), np.array([[1.0, 0.0], [1.0, 0.0]])])
        assert float(comp_loss(Tensor(A)).data) == pytest.approx(1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.random((3, 6))
        A /= A.sum(axis=1, keepdims=True)
        assert float(comp_loss(Tensor(A)).data) >= 0

    def test_convex_combination_upper_bound(self):
        # Along a line between two stochastic matrices the loss is a quartic
        # polynomial in the mix weight; it stays below the larger endpoint on
        # the duplicated-to-distinct path.
        lo, hi = np.eye(2), np.array([[1.0, 0.0], [1.0, 0.0]])
        vals = [float(comp_loss(Tensor((1 - t) * lo + t * hi)).data) for t in np.linspace(0, 1, 11)]
        assert vals[0] == 0.0 and vals[-1] == 2.0
        assert all(v <= 2.0 + 1e-12 for v in vals)
        assert all(np.diff(vals) >= 0)

    def test_gradient(self):
        rng = np.random.default_rng(3)
        assert check_grads(lambda s: comp_loss(ad.softmax(s)), [rng.normal(size=(2, 3, 4))]) <= 1e-6


class TestTransfer:
    def test_value_copy(self):
        M = Tensor(np.random.default_rng(0).normal(size=(1, 2, 3)))
        D = transfer(M)
        np.testing.assert_array_equal(D.data, M.data)
        assert D.data is not M.data

    def test_zeros(self):
        D = transfer(Tensor(np.ones((1, 2, 3))), zeros=True)
        assert D.shape == (1, 2, 3) and not D.data.any()

    def test_writes_never_touch_encoder_memory(self):
        rng = np.random.default_rng(1)
        M_E = Tensor(rng.normal(size=(1, 3, 4)))
        before = M_E.data.tobytes()
        store = ParamStore(seed=0, dtype=np.float64)
        writer = MemoryWriter(store, 2, 4)
        M_D = transfer(M_E)
        for _ in range(5):
            M_D = writer(Tensor(rng.normal(size=(1, 2))), Tensor(rng.normal(size=(1, 4))), M_D)
        assert M_E.data.tobytes() == before
        assert not np.array_equal(M_D.data, M_E.data)


class TestRead:
    def test_single_slot(self):
        M = Tensor([[[1.0, 2.0]]])
        rr = read(Tensor([[0.3]]), M, Tensor([[1.0, 1.0]]), M)
        np.testing.assert_array_equal(rr.psi.data, [[1.0]])
        np.testing.assert_array_equal(rr.readout.data, [[1.0, 2.0]])

    def test_hand_bilinear(self):
        # h = [1], W = [[1, 0]] scores slot k by its first coordinate
        M_D = np.array([[[0.0, 5.0], [np.log(3.0), -1.0]]])
        M_E = np.array([[[1.0, 1.0], [2.0, 0.0]]])
        rr = read(Tensor([[1.0]]), Tensor(M_D), Tensor([[1.0, 0.0]]), Tensor(M_E))
        np.testing.assert_allclose(rr.psi.data, [[0.25, 0.75]], atol=1e-12)
        np.testing.assert_allclose(rr.readout.data, [[0.75 * np.log(3.0), 0.5]], atol=1e-12)
        np.testing.assert_allclose(rr.enc_readout.data, [[1.75, 0.25]], atol=1e-12)

    def test_identical_slots_uniform(self):
        M = Tensor(np.tile([[[0.2, 0.4]]], (1, 4, 1)))
        rr = read(Tensor([[1.0, -1.0]]), M, Tensor(np.eye(2)))
        np.testing.assert_allclose(rr.psi.data, 0.25)
        assert rr.enc_readout is None


class TestWrite:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.M = Tensor(rng.normal(size=(2, 3, 4)))
        self.u = Tensor(rng.normal(size=(2, 3, 4)))

    def test_gate_one_is_identity(self):
        out = gated_update(self.M, Tensor(np.ones((2, 3, 4))), self.u)
        np.testing.assert_array_equal(out.data, self.M.data)

    def test_gate_zero_replaces(self):
        out = gated_update(self.M, Tensor(np.zeros((2, 3, 4))), self.u)
        np.testing.assert_array_equal(out.data, self.u.data)

    def test_half_gate_on_zero_candidate_halves(self):
        out = gated_update(Tensor(np.ones((1, 1, 2))), Tensor(np.full((1, 1, 2), 0.5)), Tensor(np.zeros((1, 1, 2))))
        np.testing.assert_array_equal(out.data, [[[0.5, 0.5]]])

    def test_saturated_writer_is_identity(self):
        store = ParamStore(seed=0, dtype=np.float64)
        w = MemoryWriter(store, 2, 4)
        w.bz.data[:] = 1e3
        out = w(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 4))), self.M)
        np.testing.assert_array_equal(out.data, self.M.data)

    def test_gates_shared_across_slots(self):
        store = ParamStore(seed=1, dtype=np.float64)
        w = MemoryWriter(store, 2, 4)
        M = Tensor(np.tile(np.random.default_rng(2).normal(size=(1, 1, 4)), (1, 3, 1)))
        z, u = w.gates(Tensor(np.ones((1, 2))), Tensor(np.ones((1, 4))), M)
        np.testing.assert_allclose(z.data[0], np.tile(z.data[0, :1], (3, 1)))
        assert ((z.data > 0) & (z.data < 1)).all() and (np.abs(u.data) < 1).all()

    def test_writer_gradients(self):
        rng = np.random.default_rng(5)
        store = ParamStore(seed=2, dtype=np.float64, scale=0.5)
        w = MemoryWriter(store, 2, 3)
        names = list(store.params)
        leaves = [store[n].data.copy() for n in names] + [rng.normal(size=(2, 2)), rng.normal(size=(2, 3)), rng.normal(size=(2, 4, 3))]
        weights = rng.normal(size=(2, 4, 3))

        def build(*ts):
            for n, t in zip(names, ts):
                setattr(w, n.rsplit(".", 1)[1], t)
            return ad.sum(w(ts[-3], ts[-2], ts[-1]) * Tensor(weights))

        assert check_grads(build, leaves) <= 1e-6


class TestReadLoss:
    def test_zero_when_equal(self):
        c = [Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 3)))]
        assert float(read_loss(c, [Tensor(x.data.copy()) for x in c]).data) == 0.0

    def test_unit_distance(self):
        assert float(read_loss([Tensor([[1.0, 0.0]])], [Tensor([[0.0, 0.0]])]).data) == 1.0

    def test_mean_over_steps(self):
        cm = [Tensor([[3.0, 0.0]]), Tensor([[0.0, 4.0]])]
        cs = [Tensor([[0.0, 0.0]]), Tensor([[0.0, 0.0]])]
        assert float(read_loss(cm, cs).data) == 3.5

    def test_padded_steps_ignored(self):
        cm = [Tensor([[3.0], [1.0]]), Tensor([[5.0], [9.0]])]
        cs = [Tensor([[0.0], [0.0]]), Tensor([[0.0], [0.0]])]
        val = read_loss(cm, cs, np.array([[True, True], [True, False]]))
        assert float(val.data) == pytest.approx(((3 + 5) / 2 + 1) / 2)

    def test_empty(self):
        with pytest.raises(ValueError):
            read_loss([], [])

    def test_gradient(self):
        rng = np.random.default_rng(0)
        leaves = [rng.normal(size=(2, 3)) for _ in range(4)]
        assert check_grads(lambda a, b, c, d: read_loss([a, b], [c, d]), leaves) <= 1e-6

    def test_gradient_through_read(self):
        rng = np.random.default_rng(4)
        leaves = [rng.normal(size=(1, 2)), rng.normal(size=(1, 3, 4)), rng.normal(size=(2, 4)), rng.normal(size=(1, 3, 4)), rng.normal(size=(1, 4))]

        def build(h, MD, W, ME, cs):
            rr = read(h, MD, W, ME)
            return read_loss([rr.enc_readout], [cs]) + ad.sum(rr.readout)

        assert check_grads(build, leaves) <= 1e-6
