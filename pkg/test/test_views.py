from intactre.numerics import ParameterStore, ShapeError, grad_check
from intactre.views import BagAttention, PairView, ViewTriple, bag_attention, description_view, type_view

import torch
from torch import nn
import pytest


def _randn(seed, *shape):
    return torch.randn(*shape, generator=torch.Generator().manual_seed(seed))


def test_single_sentence_bag_is_the_sentence():
    sentence = _randn(0, 1, 6)
    assert torch.allclose(bag_attention(sentence, _randn(1, 6), torch.ones(6)), sentence[0])


def test_bag_vector_is_convex_combination():
    bag = _randn(0, 4, 6)
    out = bag_attention(bag, _randn(1, 6), torch.ones(6))
    assert torch.all(out <= bag.max(dim=0).values + 1e-12)
    assert torch.all(out >= bag.min(dim=0).values - 1e-12)


def test_bag_attention_is_permutation_invariant():
    bag, query, diagonal = _randn(0, 5, 6), _randn(1, 6), _randn(2, 6)
    permuted = bag[torch.tensor([3, 0, 4, 1, 2])]
    assert torch.allclose(bag_attention(bag, query, diagonal), bag_attention(permuted, query, diagonal))


def test_bag_attention_with_stacked_queries():
    bag, queries, diagonal = _randn(0, 3, 6), _randn(1, 4, 6), _randn(2, 6)
    stacked = bag_attention(bag, queries, diagonal)
    assert stacked.shape == (4, 6)
    for k in range(4):
        assert torch.allclose(stacked[k], bag_attention(bag, queries[k], diagonal))


def test_bag_attention_prefers_aligned_sentence():
    query = torch.tensor([10.0, 0.0])
    bag = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
    out = bag_attention(bag, query, torch.ones(2))
    assert out[0] > 0.99


def test_bag_attention_shapes():
    with pytest.raises(ShapeError):
        bag_attention(torch.zeros(0, 6), torch.zeros(6), torch.ones(6))
    with pytest.raises(ShapeError):
        bag_attention(torch.zeros(2, 6), torch.zeros(5), torch.ones(6))


def test_bag_attention_module():
    module = BagAttention(6)
    bags = [_randn(0, 2, 6), _randn(1, 3, 6)]
    assert module(bags, _randn(2, 2, 6)).shape == (2, 6)
    assert module(bags, _randn(3, 2, 5, 6)).shape == (2, 5, 6)
    with pytest.raises(ShapeError):
        module(bags, _randn(2, 3, 6))


def test_pair_view_is_bounded_and_ordered():
    torch.manual_seed(0)
    layer = PairView(6)
    a, b = _randn(0, 6), _randn(1, 6)
    out = description_view(a, b, layer)
    assert out.shape == (6,)
    assert torch.all(out.abs() < 1)
    assert not torch.allclose(out, type_view(b, a, layer))
    assert torch.allclose(out, torch.tanh(layer.linear(torch.cat([a, b]))))


def test_view_triple_stacks_views():
    triple = ViewTriple(torch.zeros(2, 4), torch.ones(2, 4), torch.full((2, 4), 2.0))
    stacked = triple.stacked()
    assert stacked.shape == (2, 3, 4)
    assert stacked[:, 2].tolist() == [[2.0] * 4] * 2


def test_bag_attention_gradients():
    bag = nn.Parameter(_randn(0, 3, 5))
    query = nn.Parameter(_randn(1, 5))
    diagonal = nn.Parameter(_randn(2, 5))
    weights = _randn(3, 5)
    params = ParameterStore({"bag": bag, "query": query, "diagonal": diagonal})
    assert grad_check(lambda: (bag_attention(bag, query, diagonal) * weights).sum(), params) < 1e-4


def test_bag_attention_by_hand():
    bag = torch.tensor([[1.0, 2.0], [3.0, -1.0]])
    query, diagonal = torch.tensor([0.5, 1.0]), torch.tensor([2.0, 1.0])
    scores = torch.tensor([1.0 * 2.0 * 0.5 + 2.0 * 1.0 * 1.0, 3.0 * 2.0 * 0.5 - 1.0 * 1.0 * 1.0])
    beta = torch.softmax(scores, dim=0)
    assert torch.allclose(bag_attention(bag, query, diagonal), beta[0] * bag[0] + beta[1] * bag[1])


def test_equal_scores_average_the_bag():
    bag = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
    assert torch.allclose(bag_attention(bag, torch.tensor([1.0, 1.0]), torch.ones(2)), torch.tensor([0.5, 0.5]))


def test_zero_pair_view():
    layer = PairView(3)
    with torch.no_grad():
        layer.linear.weight.zero_()
        layer.linear.bias.zero_()
    assert torch.equal(description_view(_randn(0, 3), _randn(1, 3), layer), torch.zeros(3))
    assert torch.equal(type_view(_randn(0, 3), _randn(1, 3), layer), torch.zeros(3))


def test_pair_view_by_hand():
    layer = PairView(2)
    with torch.no_grad():
        layer.linear.weight.copy_(torch.tensor([[1.0, 0.0, 0.0, 1.0], [0.0, -1.0, 2.0, 0.0]]))
        layer.linear.bias.copy_(torch.tensor([0.1, -0.2]))
    out = description_view(torch.tensor([0.3, 0.4]), torch.tensor([-0.5, 0.6]), layer)
    expected = torch.tanh(torch.tensor([0.3 + 0.6 + 0.1, -0.4 - 1.0 - 0.2]))
    assert torch.allclose(out, expected)


def test_bag_weights_are_distributions():
    # with basis sentences the bag vector is the weight vector itself
    generator = torch.Generator().manual_seed(0)
    for _ in range(1000):
        m = int(torch.randint(1, 7, (1,), generator=generator))
        bag = torch.eye(6)[:m]
        beta = bag_attention(bag, 5 * torch.randn(6, generator=generator), torch.randn(6, generator=generator))
        assert abs(float(beta.sum()) - 1) < 1e-6
        assert bool((beta >= 0).all())
