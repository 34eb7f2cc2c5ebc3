"""
Corpus ingestion, vocabularies and fixed-length encoding of entity-pair samples.

Input files are line-delimited JSON (sentences, descriptions, types) plus a plain
relation list whose first line is ``NA``. One training sample is produced per
``(head, tail, relation)`` key; evaluation corpora can instead be grouped per
``(head, tail)`` pair, keeping every gold relation of the pair as a fact.
"""

from collections import Counter
import dataclasses
from dataclasses import dataclass, field
import json
import logging
from pathlib import Path
from typing import Dict, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch

from . import archive
from .utils import PathLike

logger = logging.getLogger(__name__)

NA_RELATION = "NA"
PAD_WORD = "<pad>"
UNKNOWN_WORD = "<unk>"
NULL_TYPE = "<null>"
UNKNOWN_TYPE = "<unk>"

Pair = Tuple[str, str]
FactSet = FrozenSet[Tuple[Pair, int]]


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusPaths:
    sentences: Path
    relations: Path
    descriptions: Optional[Path] = None
    types: Optional[Path] = None


@dataclass(frozen=True)
class SentenceRecord:
    head: str
    tail: str
    relation: str
    tokens: Tuple[str, ...]
    head_pos: int
    tail_pos: int


@dataclass
class RawBag:
    pair: Pair
    relations: Tuple[str, ...]
    sentences: List[SentenceRecord]

    @property
    def relation(self) -> str:
        """The bag label: its first non-NA relation, NA only if there is no other."""
        return next((r for r in self.relations if r != NA_RELATION), self.relations[0])


@dataclass
class CorpusStats:
    sentences: int = 0
    pairs: int = 0
    facts: int = 0
    bags: int = 0
    sparse_bag_fraction: float = 0.0
    entities: int = 0
    described_entities: int = 0
    mean_types_per_entity: float = 0.0


@dataclass
class RawDataset:
    bags: List[RawBag]
    relations: List[str]
    descriptions: Dict[str, List[str]] = field(default_factory=dict)
    types: Dict[str, List[str]] = field(default_factory=dict)
    names: Dict[str, str] = field(default_factory=dict)
    stats: CorpusStats = field(default_factory=CorpusStats)


def _read_jsonl(path: Path) -> Iterator[Tuple[int, Dict[str, object]]]:
    with open(path, "r", encoding="utf-8") as stream:
        for lineno, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({e.msg})") from e
            if not isinstance(record, dict):
                raise CorpusFormatError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def _field(record: Mapping[str, object], name: str, kind: type, where: str) -> object:
    try:
        value = record[name]
    except KeyError:
        raise CorpusFormatError(f"{where}: missing field '{name}'") from None
    if not isinstance(value, kind) or isinstance(value, bool):
        raise CorpusFormatError(f"{where}: field '{name}' must be {kind.__name__}")
    return value


def _token_list(record: Mapping[str, object], name: str, where: str) -> List[str]:
    tokens = _field(record, name, list, where)
    assert isinstance(tokens, list)
    if not all(isinstance(t, str) for t in tokens):
        raise CorpusFormatError(f"{where}: field '{name}' must be a list of strings")
    return tokens


def load_relations(path: PathLike) -> List[str]:
    with open(path, "r", encoding="utf-8") as stream:
        relations = [line.strip() for line in stream if line.strip()]
    if not relations or relations[0] != NA_RELATION:
        raise CorpusFormatError(f"{path}:1: the first relation must be '{NA_RELATION}'")
    if len(set(relations)) != len(relations):
        raise CorpusFormatError(f"{path}: duplicate relation names")
    return relations


def load_sentences(path: Path, relations: Sequence[str]) -> List[SentenceRecord]:
    known = set(relations)
    records = []
    for lineno, record in _read_jsonl(path):
        where = f"{path}:{lineno}"
        tokens = _token_list(record, "tokens", where)
        head_pos = _field(record, "head_pos", int, where)
        tail_pos = _field(record, "tail_pos", int, where)
        assert isinstance(head_pos, int) and isinstance(tail_pos, int)
        for name, pos in (("head_pos", head_pos), ("tail_pos", tail_pos)):
            if not 0 <= pos < len(tokens):
                raise CorpusFormatError(f"{where}: {name}={pos} is outside the {len(tokens)} tokens")
        relation = _field(record, "relation", str, where)
        if relation not in known:
            raise CorpusFormatError(f"{where}: unknown relation '{relation}'")
        records.append(SentenceRecord(
            head=str(_field(record, "head", str, where)),
            tail=str(_field(record, "tail", str, where)),
            relation=str(relation),
            tokens=tuple(tokens),
            head_pos=head_pos,
            tail_pos=tail_pos,
        ))
    return records


def load_descriptions(path: Path) -> Dict[str, List[str]]:
    descriptions = {}
    for lineno, record in _read_jsonl(path):
        where = f"{path}:{lineno}"
        descriptions[str(_field(record, "entity", str, where))] = _token_list(record, "tokens", where)
    return descriptions


def load_types(path: Path) -> Dict[str, List[str]]:
    types = {}
    for lineno, record in _read_jsonl(path):
        where = f"{path}:{lineno}"
        types[str(_field(record, "entity", str, where))] = _token_list(record, "types", where)
    return types


def group_sentences(sentences: Sequence[SentenceRecord], relations: Sequence[str], grouping: str = "relation") -> List[RawBag]:
    """
    Group sentences into bags, keyed by ``(head, tail, relation)`` or by ``(head, tail)``.

    Bags keep the order in which their key first appears.
    """
    if grouping not in ("relation", "pair"):
        raise ValueError(f"unknown grouping '{grouping}'")
    order = {name: i for i, name in enumerate(relations)}
    bags: Dict[Tuple[str, ...], RawBag] = {}
    for s in sentences:
        key: Tuple[str, ...] = (s.head, s.tail, s.relation) if grouping == "relation" else (s.head, s.tail)
        bag = bags.get(key)
        if bag is None:
            bag = bags[key] = RawBag((s.head, s.tail), (s.relation,), [])
        elif s.relation not in bag.relations:
            bag.relations = tuple(sorted(bag.relations + (s.relation,), key=order.__getitem__))
        bag.sentences.append(s)
    return list(bags.values())


def corpus_stats(bags: Sequence[RawBag], descriptions: Mapping[str, List[str]],
                 types: Mapping[str, List[str]]) -> CorpusStats:
    pairs = {bag.pair for bag in bags}
    facts = {(bag.pair, r) for bag in bags for r in bag.relations if r != NA_RELATION}
    entities = {e for pair in pairs for e in pair}
    n_sentences = sum(len(bag.sentences) for bag in bags)
    return CorpusStats(
        sentences=n_sentences,
        pairs=len(pairs),
        facts=len(facts),
        bags=len(bags),
        sparse_bag_fraction=(sum(len(bag.sentences) == 1 for bag in bags) / len(bags)) if bags else 0.0,
        entities=len(entities),
        described_entities=sum(e in descriptions for e in entities),
        mean_types_per_entity=float(np.mean([len(t) for t in types.values()])) if types else 0.0,
    )


def load_corpus(paths: CorpusPaths, grouping: str = "relation") -> RawDataset:
    """
    Read one corpus split and group its sentences into bags.
    """
    relations = load_relations(paths.relations)
    sentences = load_sentences(paths.sentences, relations)
    descriptions = load_descriptions(paths.descriptions) if paths.descriptions else {}
    types = load_types(paths.types) if paths.types else {}

    names: Dict[str, str] = {}
    for s in sentences:
        names.setdefault(s.head, s.tokens[s.head_pos])
        names.setdefault(s.tail, s.tokens[s.tail_pos])

    bags = group_sentences(sentences, relations, grouping)
    stats = corpus_stats(bags, descriptions, types)
    logger.info("loaded %s: %d sentences, %d entity pairs, %d facts, %d bags (%.1f%% single-sentence)",
                paths.sentences, stats.sentences, stats.pairs, stats.facts, stats.bags, 100 * stats.sparse_bag_fraction)
    logger.info("%d/%d entities have a description, %.2f types per typed entity",
                stats.described_entities, stats.entities, stats.mean_types_per_entity)
    return RawDataset(bags, relations, descriptions, types, names, stats)


def subsample(dataset: RawDataset, max_bags: Optional[int] = None, top_relations: Optional[int] = None,
              seed: int = 0, keep_relations: Optional[Sequence[str]] = None) -> RawDataset:
    """
    Shrink a corpus to NA plus its most frequent relations and at most ``max_bags`` bags.

    ``keep_relations`` fixes the relation inventory instead (use the training
    split's inventory when subsampling the matching test split).
    """
    if keep_relations is None:
        if top_relations is None:
            keep_relations = dataset.relations
        else:
            counts = Counter(r for bag in dataset.bags for r in bag.relations if r != NA_RELATION)
            top = sorted(counts, key=lambda r: (-counts[r], dataset.relations.index(r)))[:top_relations]
            keep_relations = [r for r in dataset.relations if r == NA_RELATION or r in top]
    kept = set(keep_relations)
    relations = [r for r in dataset.relations if r in kept]
    if not relations or relations[0] != NA_RELATION:
        raise ValueError(f"a relation inventory must start with '{NA_RELATION}'")

    bags = []
    for bag in dataset.bags:
        sentences = [s for s in bag.sentences if s.relation in kept]
        if sentences:
            bags.append(RawBag(bag.pair, tuple(r for r in bag.relations if r in kept), sentences))
    if max_bags is not None and len(bags) > max_bags:
        chosen = np.sort(np.random.default_rng(seed).permutation(len(bags))[:max_bags])
        bags = [bags[i] for i in chosen]

    result = dataclasses.replace(dataset, bags=bags, relations=relations)
    result.stats = corpus_stats(bags, dataset.descriptions, dataset.types)
    logger.info("subsampled to %d bags over %d relations", len(bags), len(relations))
    return result


class Vocabulary:
    """
    Bidirectional token ↔ id map. Reserved tokens take the first ids.
    """

    def __init__(self, tokens: Sequence[str], unknown: Optional[str] = None):
        self.tokens: List[str] = list(tokens)
        self._index = {token: i for i, token in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        self.unknown_id = self._index[unknown] if unknown is not None else None

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens and self.unknown_id == other.unknown_id

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            if self.unknown_id is None:
                raise
            return self.unknown_id

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self.index(t) for t in tokens]

    def decode(self, ids: Sequence[int]) -> List[str]:
        return [self.tokens[i] for i in ids]

    def save(self, path: PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as stream:
            stream.writelines(token + "\n" for token in self.tokens)

    @classmethod
    def load(cls, path: PathLike, unknown: Optional[str] = None) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as stream:
            return cls([line.rstrip("\n") for line in stream], unknown)


@dataclass
class Vocabularies:
    words: Vocabulary
    types: Vocabulary
    relations: Vocabulary

    def save(self, directory: PathLike) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.words.save(directory / "words.txt")
        self.types.save(directory / "types.txt")
        self.relations.save(directory / "relations.txt")

    @classmethod
    def load(cls, directory: PathLike) -> "Vocabularies":
        directory = Path(directory)
        return cls(Vocabulary.load(directory / "words.txt", UNKNOWN_WORD),
                   Vocabulary.load(directory / "types.txt", UNKNOWN_TYPE),
                   Vocabulary.load(directory / "relations.txt"))

    def to_attrs(self) -> Dict[str, List[str]]:
        return {"words": self.words.tokens, "types": self.types.tokens, "relations": self.relations.tokens}

    @classmethod
    def from_attrs(cls, attrs: Mapping[str, List[str]]) -> "Vocabularies":
        return cls(Vocabulary(attrs["words"], UNKNOWN_WORD), Vocabulary(attrs["types"], UNKNOWN_TYPE),
                   Vocabulary(attrs["relations"]))


def _frequency_order(counts: Counter, min_count: int = 1) -> List[str]:  # type: ignore [type-arg]
    return sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))


def build_vocab(dataset: RawDataset, min_count: int = 1) -> Vocabularies:
    """
    Word, type and relation vocabularies with deterministic ids.

    Ids follow descending frequency, ties broken lexicographically. Words seen
    fewer than ``min_count`` times map to the unknown word.
    """
    entities = {e for bag in dataset.bags for e in bag.pair}
    words: Counter = Counter()  # type: ignore [type-arg]
    for bag in dataset.bags:
        for s in bag.sentences:
            words.update(s.tokens)
    for entity in sorted(entities):
        words.update(description_tokens(entity, dataset))
    types: Counter = Counter(t for e in entities for t in dataset.types.get(e, []))  # type: ignore [type-arg]

    reserved_words = [PAD_WORD, UNKNOWN_WORD]
    reserved_types = [NULL_TYPE, UNKNOWN_TYPE]
    vocab = Vocabularies(
        words=Vocabulary(reserved_words + [w for w in _frequency_order(words, min_count) if w not in reserved_words],
                         UNKNOWN_WORD),
        types=Vocabulary(reserved_types + [t for t in _frequency_order(types) if t not in reserved_types],
                         UNKNOWN_TYPE),
        relations=Vocabulary(dataset.relations),
    )
    logger.info("vocabularies: %d words, %d types, %d relations", len(vocab.words), len(vocab.types), len(vocab.relations))
    return vocab


def description_tokens(entity: str, dataset: RawDataset) -> List[str]:
    """
    The entity's description, or its surface name when it has none.
    """
    tokens = dataset.descriptions.get(entity)
    if tokens:
        return tokens
    return [dataset.names.get(entity, entity)]


@dataclass(frozen=True)
class EncodingSettings:
    sequence_length: int = 120
    typeset_size: int = 15
    max_relative_position: int = 60
    max_bag_size: int = 500

    @property
    def position_pad_id(self) -> int:
        return 2 * self.max_relative_position + 1

    @property
    def position_vocab_size(self) -> int:
        return 2 * self.max_relative_position + 2


@dataclass
class EncodedSentence:
    tokens: np.ndarray
    head_positions: np.ndarray
    tail_positions: np.ndarray
    length: int


@dataclass
class EncodedDescription:
    tokens: np.ndarray
    positions: np.ndarray
    length: int


@dataclass
class EncodedTypeSet:
    types: np.ndarray
    length: int


@dataclass
class EntityPairSample:
    pair: Pair
    bag: List[EncodedSentence]
    descriptions: Tuple[EncodedDescription, EncodedDescription]
    types: Tuple[EncodedTypeSet, EncodedTypeSet]
    relation: int
    facts: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.bag:
            raise ValueError(f"sample {self.pair} has an empty sentence bag")


def relative_positions(anchor: int, settings: EncodingSettings, length: int) -> np.ndarray:
    """
    Clipped, shifted distances ``i - anchor`` for the first ``length`` slots, pad id after.
    """
    out = np.full(settings.sequence_length, settings.position_pad_id, dtype=np.int64)
    p = settings.max_relative_position
    out[:length] = np.clip(np.arange(length) - anchor, -p, p) + p
    return out


def _pad_ids(ids: Sequence[int], size: int, pad_id: int) -> np.ndarray:
    out = np.full(size, pad_id, dtype=np.int64)
    out[: min(len(ids), size)] = ids[:size]
    return out


def encode_sentence(record: SentenceRecord, words: Vocabulary, settings: EncodingSettings) -> EncodedSentence:
    length = min(len(record.tokens), settings.sequence_length)
    return EncodedSentence(
        tokens=_pad_ids(words.encode(record.tokens), settings.sequence_length, words.index(PAD_WORD)),
        head_positions=relative_positions(record.head_pos, settings, length),
        tail_positions=relative_positions(record.tail_pos, settings, length),
        length=length,
    )


def encode_description(tokens: Sequence[str], name: str, words: Vocabulary, settings: EncodingSettings) -> EncodedDescription:
    anchor = tokens.index(name) if name in tokens else 0
    length = min(len(tokens), settings.sequence_length)
    return EncodedDescription(
        tokens=_pad_ids(words.encode(tokens), settings.sequence_length, words.index(PAD_WORD)),
        positions=relative_positions(anchor, settings, length),
        length=length,
    )


def encode_typeset(type_names: Sequence[str], types: Vocabulary, settings: EncodingSettings,
                   rng: np.random.Generator) -> EncodedTypeSet:
    """
    At most ``typeset_size`` type ids padded with the null type.

    Oversized sets are cut down to a random subset drawn from ``rng``. An entity
    without types is represented by a single null type, so its set is never empty.
    """
    ids = types.encode(type_names)
    if len(ids) > settings.typeset_size:
        keep = np.sort(rng.choice(len(ids), settings.typeset_size, replace=False))
        ids = [ids[i] for i in keep]
    null_id = types.index(NULL_TYPE)
    return EncodedTypeSet(_pad_ids(ids, settings.typeset_size, null_id), max(1, len(ids)))


def encode_sample(bag: RawBag, dataset: RawDataset, vocab: Vocabularies, settings: EncodingSettings,
                  rng: np.random.Generator) -> EntityPairSample:
    sentences = bag.sentences
    if len(sentences) > settings.max_bag_size:
        keep = np.sort(rng.choice(len(sentences), settings.max_bag_size, replace=False))
        sentences = [sentences[i] for i in keep]
    head, tail = bag.pair
    return EntityPairSample(
        pair=bag.pair,
        bag=[encode_sentence(s, vocab.words, settings) for s in sentences],
        descriptions=(
            encode_description(description_tokens(head, dataset), dataset.names.get(head, head), vocab.words, settings),
            encode_description(description_tokens(tail, dataset), dataset.names.get(tail, tail), vocab.words, settings),
        ),
        types=(
            encode_typeset(dataset.types.get(head, []), vocab.types, settings, rng),
            encode_typeset(dataset.types.get(tail, []), vocab.types, settings, rng),
        ),
        relation=vocab.relations.index(bag.relation),
        facts=tuple(vocab.relations.index(r) for r in bag.relations),
    )


@dataclass
class EncodedDataset:
    samples: List[EntityPairSample]
    vocab: Vocabularies
    settings: EncodingSettings

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def relation_names(self) -> List[str]:
        return self.vocab.relations.tokens

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.relation for s in self.samples], dtype=np.int64)

    def facts(self) -> FactSet:
        na = self.vocab.relations.index(NA_RELATION)
        return frozenset((s.pair, r) for s in self.samples for r in s.facts if r != na)

    def pairs(self) -> List[Pair]:
        return [s.pair for s in self.samples]

    def collate(self, indices: Sequence[int]) -> "EncodedBatch":
        return collate([self.samples[i] for i in indices])


def encode_dataset(dataset: RawDataset, vocab: Vocabularies, settings: EncodingSettings = EncodingSettings(),
                   seed: int = 0) -> EncodedDataset:
    rng = np.random.default_rng(seed)
    return EncodedDataset([encode_sample(bag, dataset, vocab, settings, rng) for bag in dataset.bags], vocab, settings)


@dataclass
class EncodedBatch:
    """Tensors for a batch of samples; sentences of all bags are stacked."""

    sentence_tokens: torch.Tensor
    sentence_head_positions: torch.Tensor
    sentence_tail_positions: torch.Tensor
    sentence_lengths: torch.Tensor
    bag_sizes: List[int]
    description_tokens: torch.Tensor
    description_positions: torch.Tensor
    description_lengths: torch.Tensor
    type_ids: torch.Tensor
    type_lengths: torch.Tensor
    relations: torch.Tensor

    def __len__(self) -> int:
        return len(self.bag_sizes)


def collate(samples: Sequence[EntityPairSample]) -> EncodedBatch:
    def stack(arrays: Sequence[np.ndarray]) -> torch.Tensor:
        return torch.from_numpy(np.stack(arrays)).long()

    sentences = [s for sample in samples for s in sample.bag]
    return EncodedBatch(
        sentence_tokens=stack([s.tokens for s in sentences]),
        sentence_head_positions=stack([s.head_positions for s in sentences]),
        sentence_tail_positions=stack([s.tail_positions for s in sentences]),
        sentence_lengths=torch.tensor([s.length for s in sentences], dtype=torch.long),
        bag_sizes=[len(sample.bag) for sample in samples],
        description_tokens=stack([np.stack([d.tokens for d in sample.descriptions]) for sample in samples]),
        description_positions=stack([np.stack([d.positions for d in sample.descriptions]) for sample in samples]),
        description_lengths=torch.tensor([[d.length for d in sample.descriptions] for sample in samples], dtype=torch.long),
        type_ids=stack([np.stack([t.types for t in sample.types]) for sample in samples]),
        type_lengths=torch.tensor([[t.length for t in sample.types] for sample in samples], dtype=torch.long),
        relations=torch.tensor([sample.relation for sample in samples], dtype=torch.long),
    )


def load_word_vectors(path: PathLike, words: Vocabulary, dim: int, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    """
    Embedding matrix for ``words``: rows of words found in the text-format vector
    file are copied, the others are drawn uniformly from [-0.1, 0.1].

    Returns the matrix and the number of rows that were found.
    """
    table = rng.uniform(-0.1, 0.1, size=(len(words), dim))
    found = 0
    with open(path, "r", encoding="utf-8") as stream:
        for lineno, line in enumerate(stream, start=1):
            parts = line.rstrip().split(" ")
            if lineno == 1 and len(parts) == 2:
                continue  # word2vec header: "<count> <dim>"
            if len(parts) != dim + 1:
                raise CorpusFormatError(f"{path}:{lineno}: expected a word and {dim} values, got {len(parts) - 1} values")
            if parts[0] in words:
                table[words.index(parts[0])] = np.asarray(parts[1:], dtype=np.float64)
                found += 1
    logger.info("initialised %d/%d word vectors from %s", found, len(words), path)
    return table, found


# -- archives ---------------------------------------------------------------

def _split_arrays(ds: EncodedDataset) -> Tuple[Dict[str, np.ndarray], Dict[str, object]]:
    samples = ds.samples
    l = ds.settings.sequence_length
    sentences = [s for sample in samples for s in sample.bag]

    def rows(arrays: List[np.ndarray], width: int) -> np.ndarray:
        return np.stack(arrays) if arrays else np.zeros((0, width), dtype=np.int64)

    arrays = {
        "sentence_tokens": rows([s.tokens for s in sentences], l),
        "sentence_head_positions": rows([s.head_positions for s in sentences], l),
        "sentence_tail_positions": rows([s.tail_positions for s in sentences], l),
        "sentence_lengths": np.array([s.length for s in sentences], dtype=np.int64),
        "bag_offsets": np.cumsum([0] + [len(sample.bag) for sample in samples]).astype(np.int64),
        "description_tokens": rows([d.tokens for sample in samples for d in sample.descriptions], l),
        "description_positions": rows([d.positions for sample in samples for d in sample.descriptions], l),
        "description_lengths": np.array([d.length for sample in samples for d in sample.descriptions], dtype=np.int64),
        "type_ids": rows([t.types for sample in samples for t in sample.types], ds.settings.typeset_size),
        "type_lengths": np.array([t.length for sample in samples for t in sample.types], dtype=np.int64),
        "relations": np.array([sample.relation for sample in samples], dtype=np.int64),
        "fact_offsets": np.cumsum([0] + [len(sample.facts) for sample in samples]).astype(np.int64),
        "facts": np.array([r for sample in samples for r in sample.facts], dtype=np.int64),
    }
    attrs: Dict[str, object] = {"pairs": [list(sample.pair) for sample in samples]}
    return arrays, attrs


def _split_from_arrays(arrays: Mapping[str, np.ndarray], attrs: Mapping[str, object], vocab: Vocabularies,
                       settings: EncodingSettings) -> EncodedDataset:
    pairs = attrs["pairs"]
    assert isinstance(pairs, list)
    bag_offsets, fact_offsets = arrays["bag_offsets"], arrays["fact_offsets"]
    samples = []
    for i, (head, tail) in enumerate(pairs):
        bag = [EncodedSentence(arrays["sentence_tokens"][j], arrays["sentence_head_positions"][j],
                               arrays["sentence_tail_positions"][j], int(arrays["sentence_lengths"][j]))
               for j in range(bag_offsets[i], bag_offsets[i + 1])]
        descriptions = tuple(EncodedDescription(arrays["description_tokens"][2 * i + k],
                                                arrays["description_positions"][2 * i + k],
                                                int(arrays["description_lengths"][2 * i + k])) for k in range(2))
        types = tuple(EncodedTypeSet(arrays["type_ids"][2 * i + k], int(arrays["type_lengths"][2 * i + k]))
                      for k in range(2))
        samples.append(EntityPairSample(
            pair=(head, tail), bag=bag,
            descriptions=descriptions,  # type: ignore [arg-type]
            types=types,  # type: ignore [arg-type]
            relation=int(arrays["relations"][i]),
            facts=tuple(int(r) for r in arrays["facts"][fact_offsets[i]:fact_offsets[i + 1]]),
        ))
    return EncodedDataset(samples, vocab, settings)


def save_dataset(path: PathLike, splits: Mapping[str, EncodedDataset]) -> str:
    """
    Write encoded splits (sharing one vocabulary) into a single CAR archive.
    """
    first = next(iter(splits.values()))
    groups = {name: _split_arrays(ds) for name, ds in splits.items()}
    attrs = {"kind": "dataset", "vocab": first.vocab.to_attrs(), "settings": dataclasses.asdict(first.settings)}
    return archive.write_groups(path, groups, attrs, compress=True)


def load_dataset(path: PathLike) -> Dict[str, EncodedDataset]:
    groups, attrs = archive.read_groups(path)
    if attrs.get("kind") != "dataset":
        raise ValueError(f"{path} does not hold an encoded dataset")
    vocab = Vocabularies.from_attrs(attrs["vocab"])
    settings = EncodingSettings(**attrs["settings"])
    return {name: _split_from_arrays(arrays, group_attrs, vocab, settings)
            for name, (arrays, group_attrs) in groups.items() if name}


__all__ = [
    "CorpusFormatError", "CorpusPaths", "RawDataset", "RawBag", "SentenceRecord", "CorpusStats",
    "Vocabulary", "Vocabularies", "EncodingSettings", "EncodedSentence", "EncodedDescription",
    "EncodedTypeSet", "EntityPairSample", "EncodedDataset", "EncodedBatch", "FactSet",
    "load_corpus", "subsample", "build_vocab", "encode_sample", "encode_dataset", "collate",
    "load_word_vectors", "save_dataset", "load_dataset",
]
