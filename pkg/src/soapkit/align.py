"""Character-level alignment of a reference transcript against ASR output.

Long inputs are first partitioned by recursively anchoring longest common
substrings: an LCS is accepted as a fixed anchor only when its expected
number of chance occurrences (under a unigram character model of the two
texts) falls below a threshold, so common short fragments never pin the
alignment. The divergent gaps between anchors are then aligned with
unit-cost edit-distance DP. Alignment is done on lowercased text with
punctuation kept in place, so offsets map back to the original strings.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

ANCHOR_THRESHOLD = 0.001
MAX_PARTITION_DEPTH = 64


class AlignmentError(ValueError):
    pass


class AlignOp(IntEnum):
    MATCH = 0
    SUBSTITUTE = 1
    INSERT = 2  # char present only in the ASR string
    DELETE = 3  # char present only in the reference string

OP_CHARS = "MSID"


@dataclass
class CharAlignment:
    """An op sequence mapping every char of both strings exactly once."""

    ops: list
    ref_len: int
    asr_len: int

    def __post_init__(self):
        n_ref = sum(1 for op in self.ops if op != AlignOp.INSERT)
        n_asr = sum(1 for op in self.ops if op != AlignOp.DELETE)
        if n_ref != self.ref_len or n_asr != self.asr_len:
            raise AlignmentError(
                f"op counts ({n_ref} ref, {n_asr} asr) do not cover "
                f"string lengths ({self.ref_len}, {self.asr_len})"
            )

    @property
    def cost(self) -> int:
        return sum(1 for op in self.ops if op != AlignOp.MATCH)

    def op_string(self) -> str:
        return "".join(OP_CHARS[op] for op in self.ops)


def _codes(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32)


def fold_case(s: str) -> str:
    """Length-preserving lowercase (chars whose lowercase form would change
    the string length are left as is)."""
    lowered = s.lower()
    if len(lowered) == len(s):
        return lowered
    return "".join(c.lower() if len(c.lower()) == 1 else c for c in s)


def longest_common_substring(a: str, b: str) -> tuple:
    """(a_start, b_start, length) of the longest substring shared by a and b.

    Ties are broken by the leftmost start in a, then the leftmost start in
    b. Rolling DP over longest-common-suffix lengths, vectorized along b.
    """
    if not a or not b:
        return (0, 0, 0)
    ca, cb = _codes(a), _codes(b)
    prev = np.zeros(len(b), dtype=np.int32)
    cur = np.zeros(len(b), dtype=np.int32)
    best_len = 0
    best_i = best_j = 0
    for i in range(len(a)):
        eq = cb == ca[i]
        cur[0] = 1 if eq[0] else 0
        np.add(prev[:-1], 1, out=cur[1:])
        cur[1:] *= eq[1:]
        row_max = int(cur.max())
        if row_max > best_len:
            best_len = row_max
            best_i = i
            best_j = int(np.argmax(cur))  # first column attaining the max
        prev, cur = cur, prev
    if best_len == 0:
        return (0, 0, 0)
    return (best_i - best_len + 1, best_j - best_len + 1, best_len)


@dataclass(frozen=True)
class CharModel:
    """Unigram character model with a floor for unseen characters.

    Observed chars get their empirical frequency; a char absent from the
    model gets 1 / (total observed + alphabet size).
    """

    probs: dict
    floor: float

    @classmethod
    def from_texts(cls, texts) -> "CharModel":
        counts = Counter()
        for t in texts:
            counts.update(t)
        total = sum(counts.values())
        if total == 0:
            return cls(probs={}, floor=1.0)
        probs = {c: n / total for c, n in counts.items()}
        return cls(probs=probs, floor=1.0 / (total + len(counts)))

    def prob(self, ch: str) -> float:
        return self.probs.get(ch, self.floor)


def expected_substring_count(pattern: str, ref_len: int, asr_len: int, model: CharModel) -> float:
    """Expected number of chance co-occurrences of `pattern` in two strings
    of the given lengths under the unigram model:
    (ref_len - L + 1) * (asr_len - L + 1) * prod(p(c))."""
    L = len(pattern)
    if L == 0:
        raise AlignmentError("pattern must be non-empty")
    if ref_len < L or asr_len < L:
        raise AlignmentError("pattern longer than one of the strings")
    p = 1.0
    for c in pattern:
        p *= model.prob(c)
        if p == 0.0:
            break
    return float(ref_len - L + 1) * float(asr_len - L + 1) * p


class PartitionStatus(IntEnum):
    ANCHORED = 0
    LEAF = 1


@dataclass
class Partition:
    """A tile of the (ref, asr) string pair.

    Anchored nodes carry the accepted LCS anchor (absolute offsets, equal
    length in both strings) plus left/right child partitions covering the
    remainders; leaves are aligned by DP. Children and anchor tile the
    node's spans without overlap.
    """

    ref_span: tuple
    asr_span: tuple
    status: PartitionStatus
    anchor: tuple | None = None  # (ref_start, asr_start, length)
    children: tuple = ()


def partition_tree(ref: str, asr: str) -> Partition:
    """Recursive LCS-anchor partition of the full string pair.

    The character model is estimated once from the concatenation of both
    strings; the expected-count test uses the lengths of the strings
    currently being partitioned.
    """
    model = CharModel.from_texts([ref, asr])
    return _partition(ref, asr, 0, 0, model, 0)


def _partition(ref, asr, ref_off, asr_off, model, depth) -> Partition:
    ref_span = (ref_off, ref_off + len(ref))
    asr_span = (asr_off, asr_off + len(asr))
    if not ref or not asr:
        return Partition(ref_span, asr_span, PartitionStatus.LEAF)
    i, j, L = longest_common_substring(ref, asr)
    if L == 0 or depth >= MAX_PARTITION_DEPTH:
        return Partition(ref_span, asr_span, PartitionStatus.LEAF)
    e = expected_substring_count(ref[i:i + L], len(ref), len(asr), model)
    if e >= ANCHOR_THRESHOLD:
        return Partition(ref_span, asr_span, PartitionStatus.LEAF)
    left = _partition(ref[:i], asr[:j], ref_off, asr_off, model, depth + 1)
    right = _partition(ref[i + L:], asr[j + L:], ref_off + i + L, asr_off + j + L, model, depth + 1)
    return Partition(
        ref_span, asr_span, PartitionStatus.ANCHORED,
        anchor=(ref_off + i, asr_off + j, L),
        children=(left, right),
    )


def dp_align(a: str, b: str) -> CharAlignment:
    """Unit-cost edit alignment of two strings (full DP).

    Traceback tie preference: Match > Substitute > Delete > Insert.
    """
    n, m = len(a), len(b)
    if n == 0:
        return CharAlignment([AlignOp.INSERT] * m, 0, m)
    if m == 0:
        return CharAlignment([AlignOp.DELETE] * n, n, 0)
    ca, cb = _codes(a), _codes(b)
    D = np.empty((n + 1, m + 1), dtype=np.int32)
    idx = np.arange(m + 1, dtype=np.int32)
    D[0] = idx
    tmp = np.empty(m + 1, dtype=np.int32)
    for i in range(1, n + 1):
        neq = (cb != ca[i - 1]).astype(np.int32)
        tmp[0] = i
        np.minimum(D[i - 1, :-1] + neq, D[i - 1, 1:] + 1, out=tmp[1:])
        # running-min trick folds in the left-to-right insert recurrence:
        # D[i,j] = j + min_{k<=j}(tmp[k] - k)
        D[i] = idx + np.minimum.accumulate(tmp - idx)
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        d = D[i, j]
        if i > 0 and j > 0 and ca[i - 1] == cb[j - 1] and d == D[i - 1, j - 1]:
            ops.append(AlignOp.MATCH)
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and ca[i - 1] != cb[j - 1] and d == D[i - 1, j - 1] + 1:
            ops.append(AlignOp.SUBSTITUTE)
            i -= 1
            j -= 1
        elif i > 0 and d == D[i - 1, j] + 1:
            ops.append(AlignOp.DELETE)
            i -= 1
        else:
            ops.append(AlignOp.INSERT)
            j -= 1
    ops.reverse()
    return CharAlignment(ops, n, m)


def _collect_ops(node: Partition, ref: str, asr: str, out: list) -> None:
    if node.status is PartitionStatus.LEAF:
        rl, rh = node.ref_span
        al, ah = node.asr_span
        out.extend(dp_align(ref[rl:rh], asr[al:ah]).ops)
        return
    left, right = node.children
    _collect_ops(left, ref, asr, out)
    out.extend([AlignOp.MATCH] * node.anchor[2])
    _collect_ops(right, ref, asr, out)


def align_transcripts(ref_text: str, asr_text: str) -> CharAlignment:
    """Hierarchical alignment: partition by statistically confident LCS
    anchors, DP inside the leaves, concatenated in document order.
    Performed on lowercased copies; offsets are valid for the originals."""
    ref_l = fold_case(ref_text)
    asr_l = fold_case(asr_text)
    tree = partition_tree(ref_l, asr_l)
    ops = []
    _collect_ops(tree, ref_l, asr_l, ops)
    return CharAlignment(ops, len(ref_text), len(asr_text))


def alignment_record(encounter_id: str, ref_text: str, asr_text: str) -> dict:
    """Per-encounter alignment dump: anchored spans plus leaf op strings."""
    ref_l = fold_case(ref_text)
    asr_l = fold_case(asr_text)
    tree = partition_tree(ref_l, asr_l)
    anchors = []
    leaves = []

    def walk(node):
        if node.status is PartitionStatus.LEAF:
            rl, rh = node.ref_span
            al, ah = node.asr_span
            if rh > rl or ah > al:
                sub = dp_align(ref_l[rl:rh], asr_l[al:ah])
                leaves.append({
                    "ref_span": [rl, rh],
                    "asr_span": [al, ah],
                    "ops": sub.op_string(),
                })
            return
        walk(node.children[0])
        anchors.append(list(node.anchor))
        walk(node.children[1])

    walk(tree)
    return {"encounter_id": encounter_id, "anchors": anchors, "leaves": leaves}
