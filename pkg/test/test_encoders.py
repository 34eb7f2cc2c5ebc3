from intactre.config import ModelConfig
from intactre.data import EncodedDescription, EncodedSentence, EncodedTypeSet
from intactre.encoders import (ConvBlock, EmbeddingTables, RelationAwareAttention, SelfAttentionBlock,
                               SequenceEncoder, conv_block, embed_sequence, embed_typeset, length_mask, rat_block,
                               sat_block, srl_forward, trl_forward)
from intactre.numerics import ConfigurationError, EmptySupportError, ParameterStore, ShapeError, grad_check

import numpy as np
import torch
import pytest

CONFIG = ModelConfig(d_word=4, d_position=4, d_type=3, d_model=8, d_intact=12, conv_width=3, conv_layers=2, heads=2)


@pytest.fixture
def tables():
    torch.manual_seed(0)
    return EmbeddingTables(CONFIG, n_words=10, n_positions=8, n_types=6)


@pytest.fixture
def relations():
    return torch.randn(CONFIG.d_model, 4, generator=torch.Generator().manual_seed(1))


def _sequence(seed, length=6):
    return torch.randn(CONFIG.d_model, length, generator=torch.Generator().manual_seed(seed))


def test_length_mask():
    assert length_mask(torch.tensor([1, 3]), 4).tolist() == [[True, False, False, False], [True, True, True, False]]
    with pytest.raises(ShapeError):
        length_mask(torch.tensor([0]), 4)
    with pytest.raises(ShapeError):
        length_mask(torch.tensor([5]), 4)


def test_embedding_shapes(tables):
    tokens = torch.tensor([[1, 2, 3, 0, 0]])
    positions = torch.tensor([[2, 3, 4, 7, 7]])
    assert tables.sequence(tokens, positions, positions).shape == (1, 8, 5)
    assert tables.sequence(tokens[0], positions[0]).shape == (8, 5)
    assert tables.typeset(torch.tensor([1, 2, 0])).shape == (8, 3)


def test_embedding_id_out_of_range(tables):
    with pytest.raises(IndexError):
        tables.sequence(torch.tensor([10]), torch.tensor([0]))
    with pytest.raises(IndexError):
        tables.typeset(torch.tensor([-1]))


def test_sentence_embedding_uses_both_position_tables(tables):
    tokens = torch.tensor([1, 1])
    head = torch.tensor([2, 2])
    E = tables.sequence(tokens, head, torch.tensor([3, 4]))
    assert torch.allclose(E[:, 0], tables.M @ torch.cat([tables.words[1], tables.head_positions[2],
                                                         tables.tail_positions[3]]))
    assert not torch.allclose(E[:, 0], E[:, 1])


def test_pretrained_word_vectors():
    vectors = np.arange(40, dtype=np.float64).reshape(10, 4)
    tables = EmbeddingTables(CONFIG, 10, 8, 6, word_vectors=vectors)
    assert np.array_equal(tables.words.detach().numpy(), vectors)
    with pytest.raises(ShapeError):
        EmbeddingTables(CONFIG, 11, 8, 6, word_vectors=vectors)


def test_conv_block_with_zero_kernels_is_identity():
    block = ConvBlock(8, 3, 2)
    with torch.no_grad():
        for kernel in block.kernels:
            kernel.zero_()
    E = _sequence(0)
    assert torch.equal(conv_block(E, block), E)


def test_conv_block_rejects_even_width():
    with pytest.raises(ConfigurationError):
        ConvBlock(8, 4, 1)


def test_self_attention_single_column():
    block = SelfAttentionBlock(8, 2)
    E = _sequence(0, length=1)
    X = torch.nn.functional.layer_norm(E.T, (8,), block.gain, block.shift, 1e-5)
    assert torch.allclose(sat_block(E, block), E + (X @ block.W_v.T @ block.W_o.T).T)


def test_self_attention_heads_must_divide_dimension():
    with pytest.raises(ConfigurationError):
        SelfAttentionBlock(8, 3)


def test_relation_attention_is_convex_combination(relations):
    block = RelationAwareAttention(8)
    H_in = _sequence(2)
    pooled, alpha = block.attend(H_in, torch.ones(6, dtype=torch.bool), relations)
    assert alpha.sum().item() == pytest.approx(1.0)
    assert torch.all(alpha >= 0)
    H = torch.nn.functional.layer_norm(H_in.T, (8,), block.gain, block.shift, 1e-5).T
    assert torch.allclose(pooled, H @ alpha)
    assert torch.all(pooled <= H.max(dim=1).values + 1e-12)
    assert torch.all(pooled >= H.min(dim=1).values - 1e-12)


def test_relation_attention_ignores_padding(relations):
    block = RelationAwareAttention(8)
    mask = length_mask(torch.tensor(4), 6)
    _, alpha = block.attend(_sequence(3), mask, relations)
    assert alpha[4:].tolist() == [0.0, 0.0]
    with pytest.raises(EmptySupportError):
        block.attend(_sequence(3), torch.zeros(6, dtype=torch.bool), relations)


def test_mean_pooling(relations):
    block = RelationAwareAttention(8, pooling="mean")
    H_in = _sequence(4)
    mask = length_mask(torch.tensor(3), 6)
    H = torch.nn.functional.layer_norm(H_in.T, (8,), block.gain, block.shift, 1e-5).T
    assert torch.allclose(rat_block(H_in, block, relations, mask), H[:, :3].mean(dim=1))
    assert not hasattr(block, "W")


def test_relation_attention_gradients(relations):
    block = RelationAwareAttention(8).double()
    R = torch.nn.Parameter(relations.clone())
    H_in = torch.nn.Parameter(_sequence(5))
    mask = length_mask(torch.tensor(5), 6)
    params = ParameterStore({**dict(block.named_parameters()), "R": R, "H_in": H_in})
    weights = torch.randn(8, generator=torch.Generator().manual_seed(6))
    assert grad_check(lambda: (block(H_in, mask, R) * weights).sum(), params, eps=1e-6) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_padding_extension_invariance(seed, relations):
    torch.manual_seed(seed)
    encoder = SequenceEncoder(CONFIG)
    short, long = _sequence(seed, 6), _sequence(seed + 100, 10)
    long[:, :6] = short
    lengths = torch.tensor(4)
    a = encoder(short, length_mask(lengths, 6), relations)
    b = encoder(long, length_mask(lengths, 10), relations)
    assert torch.allclose(a, b, atol=1e-12)


def test_batched_encoding_matches_single(relations):
    torch.manual_seed(0)
    encoder = SequenceEncoder(CONFIG)
    batch = torch.stack([_sequence(1), _sequence(2)])
    lengths = torch.tensor([6, 3])
    out = encoder(batch, length_mask(lengths, 6), relations)
    for i in range(2):
        assert torch.allclose(out[i], encoder(batch[i], length_mask(lengths[i], 6), relations), atol=1e-12)


def test_mask_shape_is_checked(relations):
    encoder = SequenceEncoder(CONFIG)
    with pytest.raises(ShapeError):
        encoder(_sequence(0), torch.ones(5, dtype=torch.bool), relations)


def test_single_sample_forward(tables, relations):
    sentence = EncodedSentence(np.array([2, 3, 0]), np.array([2, 3, 7]), np.array([1, 2, 7]), 2)
    description = EncodedDescription(np.array([4, 0, 0]), np.array([3, 7, 7]), 1)
    types = EncodedTypeSet(np.array([1, 2]), 2)
    encoder, type_encoder = SequenceEncoder(CONFIG), SequenceEncoder(CONFIG, convolution=False)
    assert embed_sequence(sentence, tables).shape == (8, 3)
    assert embed_typeset(types, tables).shape == (8, 2)
    assert srl_forward(sentence, tables, encoder, relations).shape == (8,)
    assert srl_forward(description, tables, encoder, relations).shape == (8,)
    assert trl_forward(types, tables, type_encoder, relations).shape == (8,)
    assert type_encoder.conv is None


def test_encoder_gradients(tables, relations):
    encoder = SequenceEncoder(CONFIG)
    R = torch.nn.Parameter(relations.clone())
    tokens, positions = torch.tensor([[1, 2, 3, 0], [4, 5, 0, 0]]), torch.tensor([[2, 3, 4, 7], [1, 2, 7, 7]])
    mask = length_mask(torch.tensor([3, 2]), 4)
    params = ParameterStore({**dict(encoder.named_parameters()), **dict(tables.named_parameters()), "R": R})
    weights = torch.randn(2, 8, generator=torch.Generator().manual_seed(2))

    def f():
        return (encoder(tables.sequence(tokens, positions, positions), mask, R) * weights).sum()

    assert grad_check(f, params, eps=1e-6, max_coords=6) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_type_representation_ignores_type_order(tables, relations, seed):
    torch.manual_seed(seed)
    type_encoder = SequenceEncoder(CONFIG, convolution=False)
    rng = np.random.default_rng(seed)
    types = np.array([1, 2, 3, 4, 5, 0])
    reference = trl_forward(EncodedTypeSet(types, 5), tables, type_encoder, relations)
    for _ in range(10):
        shuffled = np.concatenate([rng.permutation(types[:5]), types[5:]])
        permuted = trl_forward(EncodedTypeSet(shuffled, 5), tables, type_encoder, relations)
        assert torch.allclose(permuted, reference, rtol=0, atol=1e-12)


def test_relation_aware_weights_are_distributions(relations):
    torch.manual_seed(0)
    block = RelationAwareAttention(CONFIG.d_model)
    generator = torch.Generator().manual_seed(1)
    for _ in range(1000):
        l = int(torch.randint(1, 9, (1,), generator=generator))
        H = 3 * torch.randn(CONFIG.d_model, l, generator=generator)
        lengths = torch.randint(1, l + 1, (1,), generator=generator)
        _, alpha = block.attend(H, length_mask(lengths, l)[0], relations)
        assert abs(float(alpha.sum()) - 1) < 1e-6
        assert bool((alpha >= 0).all())
