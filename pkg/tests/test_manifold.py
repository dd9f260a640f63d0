"""Ball-operation unit values and randomized property checks.

Expected values are hand-evaluated from the closed forms (see the inline
derivations); the randomized properties mirror the algebraic identities the
operations must satisfy.
"""

import math

import numpy as np
import pytest

from hypersess import manifold as M

RNG = lambda s: np.random.default_rng(s)


def rand_ball(rng, d, max_norm):
    """Uniform direction, norm uniform in (0, max_norm]."""
    v = rng.normal(size=d)
    v /= np.linalg.norm(v)
    return v * rng.uniform(0.0, max_norm)


class TestBallPoint:
    def test_inside_unchanged(self):
        v = M.ball_point([0.3, 0.0])
        np.testing.assert_array_equal(v, [0.3, 0.0])

    def test_rescaled_to_shell(self):
        # norm 5 -> scale by (1 - 1e-5)/5
        v = M.ball_point([3.0, 4.0])
        np.testing.assert_allclose(v, [0.599994, 0.799992], atol=1e-12)
        assert np.linalg.norm(v) == pytest.approx(1 - 1e-5, abs=1e-12)

    def test_origin_fixed(self):
        np.testing.assert_array_equal(M.ball_point([0.0, 0.0]), [0.0, 0.0])

    @pytest.mark.parametrize("bad", [[np.nan, 0.0], [np.inf, 1.0], [1.0, -np.inf]])
    def test_nonfinite_rejected(self, bad):
        with pytest.raises(ValueError):
            M.ball_point(bad)
        with pytest.raises(ValueError):
            M.project_to_ball(np.array(bad))


class TestMobiusAdd:
    def test_right_identity(self):
        np.testing.assert_allclose(
            M.mobius_add(np.array([0.3, 0.0]), np.zeros(2)), [0.3, 0.0], atol=1e-15
        )

    def test_closed_form(self):
        # numerator (1+0.24+0.16)*0.3 + (1-0.09)*0.4 = 0.784
        # denominator 1+0.24+0.0144 = 1.2544 -> 0.625
        out = M.mobius_add(np.array([0.3, 0.0]), np.array([0.4, 0.0]))
        np.testing.assert_allclose(out, [0.625, 0.0], atol=1e-12)

    def test_inverse(self):
        a = np.array([0.3, 0.2])
        np.testing.assert_allclose(M.mobius_add(a, M.negate(a)), 0.0, atol=1e-15)


class TestScalarMul:
    def test_identity_scalar(self):
        np.testing.assert_allclose(
            M.mobius_scalar_mul(1.0, np.array([0.5, 0.0])), [0.5, 0.0], atol=1e-15
        )

    def test_zero_scalar(self):
        np.testing.assert_allclose(
            M.mobius_scalar_mul(0.0, np.array([0.5, 0.1])), 0.0, atol=1e-15
        )

    def test_zero_vector(self):
        np.testing.assert_array_equal(M.mobius_scalar_mul(2.0, np.zeros(3)), np.zeros(3))

    def test_tanh_double_angle(self):
        # tanh(2 artanh 0.5) = 2*0.5/(1+0.25) = 0.8
        out = M.mobius_scalar_mul(2.0, np.array([0.5, 0.0]))
        np.testing.assert_allclose(out, [0.8, 0.0], atol=1e-12)


class TestMatvec:
    def test_identity_matrix(self):
        a = np.array([0.3, 0.4])
        np.testing.assert_allclose(M.mobius_matvec(np.eye(2), a), a, atol=1e-12)

    def test_reduces_to_scalar_mul(self):
        a = np.array([0.5, 0.0])
        out = M.mobius_matvec(2.0 * np.eye(2), a)
        np.testing.assert_allclose(out, M.mobius_scalar_mul(2.0, a), atol=1e-12)

    def test_permutation(self):
        perm = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = M.mobius_matvec(perm, np.array([0.3, 0.4]))
        np.testing.assert_allclose(out, [0.4, 0.3], atol=1e-12)

    def test_zero_vector_and_kernel(self):
        np.testing.assert_array_equal(M.mobius_matvec(np.eye(3), np.zeros(3)), np.zeros(3))
        # a in the kernel of M
        m = np.array([[1.0, -1.0], [2.0, -2.0]])
        np.testing.assert_array_equal(M.mobius_matvec(m, np.array([0.2, 0.2])), np.zeros(2))

    def test_rectangular_output_dim(self):
        m = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        assert M.mobius_matvec(m, np.array([0.1, 0.2, 0.3])).shape == (2,)


class TestExpLog:
    def test_zero_tangent(self):
        np.testing.assert_array_equal(M.exp_map(np.zeros(2), np.zeros(2)), np.zeros(2))
        x = np.array([0.2, 0.1])
        np.testing.assert_array_equal(M.exp_map(x, np.zeros(2)), x)

    def test_exp_at_origin(self):
        v = np.array([math.atanh(0.5), 0.0])
        np.testing.assert_allclose(M.exp_map(np.zeros(2), v), [0.5, 0.0], atol=1e-12)

    def test_log_same_point(self):
        x = np.array([0.3, 0.1])
        np.testing.assert_array_equal(M.log_map(x, x), np.zeros(2))

    def test_log_at_origin(self):
        out = M.log_map(np.zeros(2), np.array([0.5, 0.0]))
        np.testing.assert_allclose(out, [math.atanh(0.5), 0.0], atol=1e-12)
        # recover through exp_map to 1e-9
        np.testing.assert_allclose(M.exp_map(np.zeros(2), out), [0.5, 0.0], atol=1e-9)

    def test_origin_helpers_match_generic(self):
        rng = RNG(3)
        for _ in range(50):
            v = rand_ball(rng, 5, 2.0)
            a = rand_ball(rng, 5, 0.9)
            np.testing.assert_allclose(M.exp_map0(v), M.exp_map(np.zeros(5), v), atol=1e-15)
            np.testing.assert_allclose(M.log_map0(a), M.log_map(np.zeros(5), a), atol=1e-15)


class TestDistance:
    def test_coincident(self):
        p = np.array([0.3, 0.1])
        assert M.distance(p, p) == 0.0

    def test_ln3(self):
        # arcosh(1 + 0.5/0.75) = arcosh(5/3) = ln 3
        out = M.distance(np.zeros(2), np.array([0.5, 0.0]))
        assert out == pytest.approx(math.log(3.0), abs=1e-12)

    def test_symmetric(self):
        rng = RNG(4)
        for _ in range(100):
            p, q = rand_ball(rng, 4, 0.95), rand_ball(rng, 4, 0.95)
            assert M.distance(p, q) == pytest.approx(M.distance(q, p), abs=1e-12)


class TestProperties:
    """Randomized identities, 1000 seeded draws each."""

    N = 1000

    def test_identity_and_inverse(self):
        rng = RNG(10)
        for _ in range(self.N):
            a = rand_ball(rng, 6, 0.9)
            np.testing.assert_allclose(M.mobius_add(a, np.zeros(6)), a, atol=1e-9)
            np.testing.assert_allclose(
                M.mobius_add(M.negate(a), a), np.zeros(6), atol=1e-9
            )

    def test_left_cancellation(self):
        rng = RNG(11)
        for _ in range(self.N):
            a, b = rand_ball(rng, 6, 0.9), rand_ball(rng, 6, 0.9)
            out = M.mobius_add(M.negate(a), M.mobius_add(a, b))
            np.testing.assert_allclose(out, b, atol=1e-8)

    def test_exp_log_roundtrip(self):
        rng = RNG(12)
        done = 0
        while done < self.N:
            x = rand_ball(rng, 6, 0.8)
            v = rand_ball(rng, 6, 2.0)
            y = M.exp_map(x, v)
            if np.linalg.norm(y) >= M.MAX_NORM - 1e-12:
                # shell clip destroyed information; draw again
                continue
            np.testing.assert_allclose(M.log_map(x, y), v, atol=1e-7)
            done += 1

    def test_distance_artanh_equivalence(self):
        rng = RNG(13)
        for _ in range(self.N):
            p, q = rand_ball(rng, 6, 0.9), rand_ball(rng, 6, 0.9)
            lhs = M.distance(p, q)
            rhs = 2.0 * math.atanh(np.linalg.norm(M.mobius_add(M.negate(p), q)))
            assert lhs == pytest.approx(rhs, abs=1e-8)

    def test_triangle_inequality(self):
        rng = RNG(14)
        for _ in range(self.N):
            p, q, r = (rand_ball(rng, 6, 0.9) for _ in range(3))
            assert M.distance(p, r) <= M.distance(p, q) + M.distance(q, r) + 1e-8

    def test_scalar_mul_iterated_add(self):
        rng = RNG(15)
        for _ in range(self.N):
            b = rand_ball(rng, 6, 0.9)
            acc = b
            for n in (1, 2, 3):
                np.testing.assert_allclose(M.mobius_scalar_mul(float(n), b), acc, atol=1e-8)
                acc = M.mobius_add(acc, b)

    def test_boundary_hardening(self):
        rng = RNG(16)
        for _ in range(200):
            u = rng.normal(size=6)
            u *= (1 - 1e-5) / np.linalg.norm(u)
            w = rand_ball(rng, 6, 0.9)
            for out in (
                M.mobius_add(u, w),
                M.mobius_scalar_mul(1.7, u),
                M.mobius_matvec(rng.normal(size=(6, 6)), u),
                M.exp_map(w, u),
                M.log_map(w, u),
                M.distance(u, w),
                M.distance(u, -u),
            ):
                assert np.all(np.isfinite(out))


class TestGradSymmetry:
    def test_swap_symmetry(self):
        # grad wrt slot 1 at (p, q) equals grad wrt slot 2 at (q, p)
        from hypersess import grad as G

        rng = RNG(17)
        for _ in range(20):
            p, q = rand_ball(rng, 4, 0.8), rand_ball(rng, 4, 0.8)
            n1, n2 = G.Node(p), G.Node(q)
            G.backward(M.distance(n1, n2))
            m1, m2 = G.Node(q), G.Node(p)
            G.backward(M.distance(m1, m2))
            np.testing.assert_allclose(n1.adjoint, m2.adjoint, atol=1e-12)
            np.testing.assert_allclose(n2.adjoint, m1.adjoint, atol=1e-12)
