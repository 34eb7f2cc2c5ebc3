import json

from intactre.data import (NA_RELATION, NULL_TYPE, PAD_WORD, UNKNOWN_WORD, CorpusFormatError, CorpusPaths,
                           EncodingSettings, SentenceRecord, Vocabularies, Vocabulary, build_vocab, collate,
                           encode_dataset, encode_description, encode_sentence, encode_typeset, load_corpus,
                           load_dataset, load_relations, load_word_vectors, relative_positions, save_dataset,
                           subsample)

import numpy as np
import pytest

PLACE_OF_BIRTH = "/people/person/place_of_birth"
CONTAINS = "/location/location/contains"


def test_load_corpus_groups_by_relation(train_paths):
    dataset = load_corpus(train_paths)
    assert [(bag.pair, bag.relation, len(bag.sentences)) for bag in dataset.bags] == [
        (("m.obama", "m.honolulu"), PLACE_OF_BIRTH, 2),
        (("m.hawaii", "m.honolulu"), CONTAINS, 1),
        (("m.obama", "m.hawaii"), NA_RELATION, 1),
        (("m.hawaii", "m.oahu"), CONTAINS, 1),
    ]
    assert dataset.names["m.obama"] == "obama"


def test_corpus_stats(train_paths):
    stats = load_corpus(train_paths).stats
    assert (stats.sentences, stats.pairs, stats.facts, stats.bags) == (5, 4, 3, 4)
    assert stats.sparse_bag_fraction == pytest.approx(0.75)
    assert (stats.entities, stats.described_entities) == (4, 2)
    assert stats.mean_types_per_entity == pytest.approx(5 / 3)


def test_pair_grouping_keeps_every_fact(heldout_paths):
    dataset = load_corpus(heldout_paths, grouping="pair")
    first = dataset.bags[0]
    assert first.pair == ("m.obama", "m.honolulu")
    assert first.relations == (NA_RELATION, PLACE_OF_BIRTH)
    assert first.relation == PLACE_OF_BIRTH
    assert len(dataset.bags) == 2


def test_relations_must_start_with_na(tmp_path):
    path = tmp_path / "relations.txt"
    path.write_text("/location/location/contains\nNA\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError, match="relations.txt:1"):
        load_relations(path)


def test_position_outside_sentence(tmp_path, corpus_dir):
    bad = tmp_path / "bad.jsonl"
    record = {"head": "a", "tail": "b", "relation": "NA", "tokens": ["a", "b"], "head_pos": 0, "tail_pos": 2}
    bad.write_text("\n" + json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError, match=r"bad.jsonl:2: tail_pos=2"):
        load_corpus(CorpusPaths(bad, corpus_dir / "relations.txt"))


def test_unknown_relation(tmp_path, corpus_dir):
    bad = tmp_path / "bad.jsonl"
    record = {"head": "a", "tail": "b", "relation": "/x", "tokens": ["a", "b"], "head_pos": 0, "tail_pos": 1}
    bad.write_text(json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError, match="unknown relation"):
        load_corpus(CorpusPaths(bad, corpus_dir / "relations.txt"))


def test_vocab_is_deterministic(train_paths, tmp_path):
    first = build_vocab(load_corpus(train_paths))
    second = build_vocab(load_corpus(train_paths))
    first.save(tmp_path / "a")
    second.save(tmp_path / "b")
    for name in ("words.txt", "types.txt", "relations.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert first.words.tokens[:2] == [PAD_WORD, UNKNOWN_WORD]
    assert first.types.tokens[0] == NULL_TYPE
    assert first.relations.tokens[0] == NA_RELATION


def test_vocab_orders_by_frequency(train_paths):
    words = build_vocab(load_corpus(train_paths)).words
    # "." and "hawaii" both occur five times, ties are broken lexicographically
    assert words.tokens[2:4] == [".", "hawaii"]
    assert words.index("never-seen") == words.index(UNKNOWN_WORD)


def test_vocabulary_roundtrip(tmp_path):
    vocab = Vocabulary(["<pad>", "<unk>", "a", "b"], "<unk>")
    vocab.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt", "<unk>") == vocab
    assert vocab.decode(vocab.encode(["b", "a"])) == ["b", "a"]


def test_vocabularies_roundtrip(train_paths, tmp_path):
    vocab = build_vocab(load_corpus(train_paths))
    vocab.save(tmp_path / "vocab")
    loaded = Vocabularies.load(tmp_path / "vocab")
    assert loaded == vocab
    assert loaded == Vocabularies.from_attrs(vocab.to_attrs())
    assert loaded.words.index("never-seen") == loaded.words.index(UNKNOWN_WORD)


def test_relative_positions_are_clipped():
    settings = EncodingSettings(sequence_length=6, max_relative_position=2)
    assert relative_positions(1, settings, 6).tolist() == [1, 2, 3, 4, 4, 4]
    assert relative_positions(5, settings, 6).tolist() == [0, 0, 0, 0, 1, 2]
    assert relative_positions(0, settings, 3).tolist() == [2, 3, 4, 5, 5, 5]


def test_encode_sentence_truncates_and_pads():
    words = Vocabulary(["<pad>", "<unk>", "a", "b"], "<unk>")
    settings = EncodingSettings(sequence_length=4, max_relative_position=2)
    long = SentenceRecord("x", "y", "NA", ("a", "b", "a", "b", "a"), 0, 4)
    short = SentenceRecord("x", "y", "NA", ("b", "c"), 0, 1)
    encoded = encode_sentence(long, words, settings)
    assert encoded.length == 4
    assert encoded.tokens.tolist() == [2, 3, 2, 3]
    encoded = encode_sentence(short, words, settings)
    assert encoded.length == 2
    assert encoded.tokens.tolist() == [3, 1, 0, 0]
    assert encoded.head_positions.tolist() == [2, 3, 5, 5]


def test_description_anchor_is_entity_name():
    words = Vocabulary(["<pad>", "<unk>", "barack", "obama"], "<unk>")
    settings = EncodingSettings(sequence_length=4, max_relative_position=3)
    encoded = encode_description(["barack", "obama"], "obama", words, settings)
    assert encoded.positions.tolist()[:2] == [2, 3]
    encoded = encode_description(["barack"], "obama", words, settings)
    assert encoded.positions.tolist()[0] == 3


def test_typeset_subset_is_reproducible():
    names = [f"/type/{i}" for i in range(20)]
    types = Vocabulary(["<null>", "<unk>"] + names, "<unk>")
    settings = EncodingSettings(typeset_size=15)
    first = encode_typeset(names, types, settings, np.random.default_rng(7))
    second = encode_typeset(names, types, settings, np.random.default_rng(7))
    assert first.length == 15
    assert first.types.tolist() == second.types.tolist()
    assert len(set(first.types.tolist())) == 15


def test_entity_without_types_gets_null_type():
    types = Vocabulary(["<null>", "<unk>"], "<unk>")
    encoded = encode_typeset([], types, EncodingSettings(typeset_size=3), np.random.default_rng(0))
    assert encoded.length == 1
    assert encoded.types.tolist() == [0, 0, 0]


def test_missing_description_falls_back_to_name(train_paths):
    dataset = load_corpus(train_paths)
    vocab = build_vocab(dataset)
    encoded = encode_dataset(dataset, vocab, EncodingSettings(sequence_length=10))
    hawaii = encoded.samples[1].descriptions[0]
    assert hawaii.length == 1
    assert vocab.words.decode(hawaii.tokens[:1].tolist()) == ["hawaii"]


def test_bag_cap(train_paths):
    dataset = load_corpus(train_paths)
    encoded = encode_dataset(dataset, build_vocab(dataset), EncodingSettings(max_bag_size=1))
    assert [len(s.bag) for s in encoded.samples] == [1, 1, 1, 1]


def test_collate_stacks_bags(train_paths):
    dataset = load_corpus(train_paths)
    encoded = encode_dataset(dataset, build_vocab(dataset), EncodingSettings(sequence_length=10, typeset_size=3))
    batch = collate(encoded.samples[:2])
    assert batch.bag_sizes == [2, 1]
    assert batch.sentence_tokens.shape == (3, 10)
    assert batch.description_tokens.shape == (2, 2, 10)
    assert batch.type_ids.shape == (2, 2, 3)
    assert batch.relations.tolist() == [1, 2]
    assert len(batch) == 2


def test_facts_exclude_na(heldout_paths, train_paths):
    train = load_corpus(train_paths)
    vocab = build_vocab(train)
    encoded = encode_dataset(load_corpus(heldout_paths, grouping="pair"), vocab)
    assert encoded.facts() == frozenset({(("m.obama", "m.honolulu"), 1), (("m.hawaii", "m.maui"), 2)})


def test_subsample_keeps_top_relations(train_paths):
    dataset = load_corpus(train_paths)
    small = subsample(dataset, top_relations=1)
    assert small.relations == [NA_RELATION, CONTAINS]
    assert {bag.relation for bag in small.bags} == {NA_RELATION, CONTAINS}
    capped = subsample(dataset, max_bags=2, seed=3)
    assert len(capped.bags) == 2
    assert [b.pair for b in capped.bags] == [b.pair for b in subsample(dataset, max_bags=2, seed=3).bags]


def test_dataset_archive_roundtrip(train_paths, heldout_paths, tmp_path):
    train = load_corpus(train_paths)
    vocab = build_vocab(train)
    settings = EncodingSettings(sequence_length=8, typeset_size=3, max_relative_position=4)
    splits = {"train": encode_dataset(train, vocab, settings),
              "test": encode_dataset(load_corpus(heldout_paths, grouping="pair"), vocab, settings)}
    save_dataset(tmp_path / "dataset.car", splits)
    loaded = load_dataset(tmp_path / "dataset.car")
    assert set(loaded) == {"train", "test"}
    for name, original in splits.items():
        restored = loaded[name]
        assert restored.vocab.words == original.vocab.words
        assert restored.settings == original.settings
        assert restored.pairs() == original.pairs()
        assert restored.facts() == original.facts()
        assert restored.labels.tolist() == original.labels.tolist()
        a, b = collate(original.samples), collate(restored.samples)
        assert a.bag_sizes == b.bag_sizes
        assert a.sentence_tokens.equal(b.sentence_tokens)
        assert a.type_ids.equal(b.type_ids)


def test_word_vectors(tmp_path):
    words = Vocabulary(["<pad>", "<unk>", "a", "b"], "<unk>")
    path = tmp_path / "vec.txt"
    path.write_text("2 3\na 1 2 3\nz 4 5 6\n", encoding="utf-8")
    table, found = load_word_vectors(path, words, 3, np.random.default_rng(0))
    assert found == 1
    assert table.shape == (4, 3)
    assert table[2].tolist() == [1.0, 2.0, 3.0]
    assert np.all(np.abs(table[3]) <= 0.1)


def test_word_vectors_with_wrong_dimension(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("a 1 2\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError, match="vec.txt:1"):
        load_word_vectors(path, Vocabulary(["<pad>", "<unk>", "a"], "<unk>"), 3, np.random.default_rng(0))
