"""Loss functions: hand-computed values, gradient checks, invariants."""

from __future__ import annotations

import math

import pytest
import torch

from countergen.errors import ConfigError, DimensionError, NumericError
from countergen.value_detector import (
    MultiTaskWeights,
    multitask_loss,
    quadruple_loss,
    similarity_pair_loss,
)


def vec(*values):
    return torch.tensor(values, dtype=torch.float64)


# -- quadruple loss: hand-computed values (exact cosine arithmetic) --------------

def test_identical_unit_vectors_give_margin_only():
    # all distances 0, loss = margin = 1.0
    v = vec(1.0, 0.0)
    assert float(quadruple_loss(v, v, v, v)) == pytest.approx(1.0, abs=1e-9)


def test_orthogonal_negatives_hand_value():
    # D(a,p)=0, D(a,ne)=1 -> alpha*(0-1) = -2; D(nh,a)=1, D(nh,p)=1 -> 0; +1 = -1
    a = vec(1.0, 0.0)
    p = vec(1.0, 0.0)
    n = vec(0.0, 1.0)
    assert float(quadruple_loss(a, p, n, n)) == pytest.approx(-1.0, abs=1e-9)


def test_orthogonal_positive_hand_value():
    # D(a,p)=1, D(a,ne)=0 -> alpha*1 = 2; D(nh,a)=0, D(nh,p)=1 -> beta*(-1); +1 = 2
    a = vec(1.0, 0.0)
    p = vec(0.0, 1.0)
    n = vec(1.0, 0.0)
    assert float(quadruple_loss(a, p, n, n)) == pytest.approx(2.0, abs=1e-9)


def test_alpha_beta_margin_parameters():
    a = vec(1.0, 0.0)
    p = vec(0.0, 1.0)
    n = vec(1.0, 0.0)
    # alpha*(1-0) + beta*(0-1) + margin
    value = quadruple_loss(a, p, n, n, alpha=3.0, beta=0.5, margin=0.25)
    assert float(value) == pytest.approx(3.0 - 0.5 + 0.25, abs=1e-9)


def test_literal_similarity_mode_flips_sign_structure():
    a = vec(1.0, 0.0)
    p = vec(1.0, 0.0)
    n = vec(0.0, 1.0)
    # with D = cosine similarity: 2*(cos(a,p)-cos(a,ne)) + (cos(nh,a)-cos(nh,p)) + 1
    #                           = 2*(1-0) + (0-0) + 1 = 3
    value = quadruple_loss(a, p, n, n, distance="cosine_similarity")
    assert float(value) == pytest.approx(3.0, abs=1e-9)
    # identical inputs score 1 under the distance mode but 2+0+1=3 here too,
    # so the two modes are distinguishable on the orthogonal case above only.
    assert float(quadruple_loss(a, p, n, n)) == pytest.approx(-1.0, abs=1e-9)


def test_zero_norm_vector_rejected():
    with pytest.raises(NumericError):
        quadruple_loss(vec(0.0, 0.0), vec(1.0, 0.0), vec(0.0, 1.0), vec(1.0, 1.0))


def test_shape_mismatch_rejected():
    with pytest.raises(DimensionError):
        quadruple_loss(vec(1.0, 0.0), vec(1.0, 0.0, 0.0), vec(0.0, 1.0), vec(1.0, 1.0))


def test_unknown_distance_rejected():
    v = vec(1.0, 0.0)
    with pytest.raises(ConfigError):
        quadruple_loss(v, v, v, v, distance="euclid")


def test_batched_inputs_reduce_by_mean():
    a = torch.stack([vec(1.0, 0.0), vec(1.0, 0.0)])
    p = torch.stack([vec(1.0, 0.0), vec(0.0, 1.0)])
    n = torch.stack([vec(0.0, 1.0), vec(1.0, 0.0)])
    value = quadruple_loss(a, p, n, n)
    assert float(value) == pytest.approx((-1.0 + 2.0) / 2, abs=1e-9)


def test_finite_difference_gradients_match_autograd():
    # 10 random points, relative error within 1e-4
    torch.manual_seed(123)
    eps = 1e-6
    for _ in range(10):
        tensors = [
            (torch.randn(6, dtype=torch.float64) + 0.1).requires_grad_(True)
            for _ in range(4)
        ]
        loss = quadruple_loss(*tensors, alpha=2.0, beta=1.0, margin=1.0)
        loss.backward()
        for which, t in enumerate(tensors):
            numeric = torch.zeros_like(t)
            for i in range(t.numel()):
                plus = [x.detach().clone() for x in tensors]
                minus = [x.detach().clone() for x in tensors]
                plus[which][i] += eps
                minus[which][i] -= eps
                numeric[i] = (
                    float(quadruple_loss(*plus)) - float(quadruple_loss(*minus))
                ) / (2 * eps)
            analytic = t.grad
            denom = max(float(analytic.norm()), 1e-8)
            assert float((numeric - analytic).norm()) / denom < 1e-4


def test_scale_invariance_property():
    torch.manual_seed(7)
    for _ in range(50):
        tensors = [torch.randn(5, dtype=torch.float64) + 0.05 for _ in range(4)]
        scales = torch.rand(4, dtype=torch.float64) * 10 + 0.1
        base = float(quadruple_loss(*tensors))
        scaled = float(quadruple_loss(*[s * t for s, t in zip(scales, tensors)]))
        assert scaled == pytest.approx(base, abs=1e-9)


# -- multitask loss -----------------------------------------------------------------

def test_zero_logits_give_ln2():
    logits = torch.zeros(4, 5, dtype=torch.float64)
    labels = torch.randint(0, 2, (4, 5)).to(torch.float64)
    value = multitask_loss(logits, logits, logits, labels, labels, labels)
    assert float(value) == pytest.approx(math.log(2), abs=1e-9)


def test_perfect_prediction_limit():
    labels = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
    logits = (labels * 2 - 1) * 500.0  # huge logits matching the labels
    value = multitask_loss(logits, logits, logits, labels, labels, labels)
    assert float(value) < 1e-12


def test_weights_apply_linearly():
    # per-level BCEs (1, 0, 0) with weights (0.23, 0.33, 0.44) -> 0.23
    one = torch.tensor([[-math.log(math.e - 1)]], dtype=torch.float64)  # BCE == 1
    zero = torch.tensor([[500.0]], dtype=torch.float64)                 # BCE ~= 0
    labels = torch.ones(1, 1, dtype=torch.float64)
    value = multitask_loss(one, zero, zero, labels, labels, labels)
    assert float(value) == pytest.approx(0.23, abs=1e-9)


def test_weights_1_0_0_equal_level1_bce():
    torch.manual_seed(11)
    logits = [torch.randn(3, 4, dtype=torch.float64) for _ in range(3)]
    labels = [torch.randint(0, 2, (3, 4)).to(torch.float64) for _ in range(3)]
    weights = MultiTaskWeights(w_l1=1.0, w_l2=0.0, w_l3=0.0)
    combined = multitask_loss(*logits, *labels, weights)
    bce_l1 = torch.nn.functional.binary_cross_entropy_with_logits(logits[0], labels[0])
    assert float(combined) == pytest.approx(float(bce_l1), abs=1e-12)


def test_linearity_in_weights():
    torch.manual_seed(13)
    logits = [torch.randn(2, 3, dtype=torch.float64) for _ in range(3)]
    labels = [torch.randint(0, 2, (2, 3)).to(torch.float64) for _ in range(3)]
    per_level = [
        float(
            multitask_loss(
                *logits,
                *labels,
                MultiTaskWeights(
                    w_l1=float(i == 0), w_l2=float(i == 1), w_l3=float(i == 2)
                ),
            )
        )
        for i in range(3)
    ]
    combined = float(multitask_loss(*logits, *labels))
    expected = 0.23 * per_level[0] + 0.33 * per_level[1] + 0.44 * per_level[2]
    assert combined == pytest.approx(expected, abs=1e-12)


def test_weights_must_sum_to_one():
    with pytest.raises(ConfigError):
        MultiTaskWeights(0.5, 0.2, 0.2)


def test_shape_mismatch_raises_dimension_error():
    a = torch.zeros(2, 3, dtype=torch.float64)
    b = torch.zeros(2, 4, dtype=torch.float64)
    with pytest.raises(DimensionError):
        multitask_loss(a, a, a, b, a, a)


# -- similarity pair loss --------------------------------------------------------------

def test_identical_positive_pairs_score_zero():
    emb = torch.tensor([[0.3, 0.4], [1.0, 0.0]], dtype=torch.float64)
    labels = torch.ones(2)
    assert float(similarity_pair_loss(emb, emb.clone(), labels)) == pytest.approx(
        0.0, abs=1e-12
    )


def test_orthogonal_negative_pairs_score_zero_at_unit_margin():
    a = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    b = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
    assert float(similarity_pair_loss(a, b, torch.zeros(1))) == pytest.approx(
        0.0, abs=1e-12
    )
    # closer than orthogonal: hinge activates
    close = torch.tensor([[1.0, 0.2]], dtype=torch.float64)
    assert float(similarity_pair_loss(a, close, torch.zeros(1))) > 0.0
