"""Transcript-to-token-id mapping with a persistent symbol inventory.

Two tokenization modes: ``char`` splits transcripts into characters,
``pseudo`` splits on whitespace (pseudo-phoneme strings like ``p007``).
Ids 0/1/2 are reserved for pad/bos/eos and never reassigned; real symbols
get ids in sorted order, so the inventory is deterministic for a corpus.
"""

from pathlib import Path

from .errors import EmptyText, InvalidInput, UnknownSymbol

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
RESERVED = {"<pad>": PAD_ID, "<bos>": BOS_ID, "<eos>": EOS_ID}
UNK_SYMBOL = "<unk>"

MODES = ("char", "pseudo")


def _split(text, mode):
    if mode not in MODES:
        raise InvalidInput(f"unknown tokenization mode {mode!r}")
    return list(text) if mode == "char" else text.split()


class SymbolInventory:
    """Bijective symbol<->id map with fixed reserved ids."""

    def __init__(self, symbol_to_id):
        self.symbol_to_id = dict(symbol_to_id)
        for sym, idx in RESERVED.items():
            if self.symbol_to_id.get(sym, idx) != idx:
                raise InvalidInput(f"reserved symbol {sym} must keep id {idx}")
            self.symbol_to_id[sym] = idx
        self.id_to_symbol = {idx: sym for sym, idx in self.symbol_to_id.items()}
        if len(self.id_to_symbol) != len(self.symbol_to_id):
            raise InvalidInput("symbol_to_id must be a bijection")

    def __len__(self):
        return len(self.symbol_to_id)

    def __contains__(self, symbol):
        return symbol in self.symbol_to_id

    @property
    def has_unk(self):
        return UNK_SYMBOL in self.symbol_to_id

    def save(self, path):
        lines = [f"{sym}\t{idx}" for sym, idx in sorted(self.symbol_to_id.items(), key=lambda kv: kv[1])]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        mapping = {}
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            sym, idx = line.split("\t")
            mapping[sym] = int(idx)
        return cls(mapping)


def build_inventory(manifest, mode="pseudo", include_unk=False) -> SymbolInventory:
    """Collect every symbol occurring in the corpus transcripts, sorted assignment."""
    records = list(manifest)
    if not records:
        raise InvalidInput("cannot build an inventory from an empty corpus")
    symbols = set()
    for rec in records:
        symbols.update(_split(rec.transcript, mode))
    symbols.discard("")
    mapping = dict(RESERVED)
    next_id = len(RESERVED)
    if include_unk:
        mapping[UNK_SYMBOL] = next_id
        next_id += 1
    for sym in sorted(symbols):
        mapping[sym] = next_id
        next_id += 1
    return SymbolInventory(mapping)


def encode_text(text, inventory: SymbolInventory, mode="pseudo", add_bos_eos=False):
    """Map text to token ids; unknown symbols raise unless the inventory has <unk>."""
    parts = _split(text, mode)
    if not parts:
        raise EmptyText("cannot encode empty text")
    ids = []
    for pos, sym in enumerate(parts):
        if sym in inventory:
            ids.append(inventory.symbol_to_id[sym])
        elif inventory.has_unk:
            ids.append(inventory.symbol_to_id[UNK_SYMBOL])
        else:
            raise UnknownSymbol(sym, pos)
    if add_bos_eos:
        ids = [BOS_ID] + ids + [EOS_ID]
    return ids


def decode_ids(ids, inventory: SymbolInventory, mode="pseudo"):
    symbols = []
    for idx in ids:
        idx = int(idx)
        if idx in (PAD_ID, BOS_ID, EOS_ID):
            continue
        sym = inventory.id_to_symbol.get(idx)
        if sym is None:
            raise UnknownSymbol(idx, len(symbols))
        symbols.append(sym)
    return ("" if mode == "char" else " ").join(symbols)
