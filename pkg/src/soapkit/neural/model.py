"""Hierarchical utterance-sequence classifier with two task heads.

Token embeddings (frozen, three layers per token) are collapsed by layer
attention then word attention into one vector per utterance; a two-layer
stacked bidirectional LSTM contextualizes the utterance sequence; two
unidirectional LSTM decoders (or plain dense heads, depending on the
variant) emit per-utterance speaker and section distributions.

Variants, from flattest to full:
  dlb  - mean of layer-attended word vectors, dense heads (w_word pinned at 0)
  wa   - word attention, dense heads
  bil  - word attention + stacked biLSTM, dense heads
  bild - word attention + stacked biLSTM + LSTM decoders with projections
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..corpus import N_SOAP, N_SPEAKER, Rng
from .embeddings import PAD_TOKEN, HashEmbeddings, load_embeddings
from .network import (
    attention_backward,
    attention_forward,
    dropout_mask,
    init_lstm,
    lstm_backward,
    lstm_forward,
    softmax,
    weighted_ce_loss_and_dlogits,
)

MODEL_VARIANTS = ("dlb", "wa", "bil", "bild")

EMBED_LAYERS = 3


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "bil"
    embed_dim: int = 16
    enc1_hidden: int = 16
    enc2_hidden: int = 8
    decoder_hidden: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.variant not in MODEL_VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}; expected one of {MODEL_VARIANTS}")
        for name in ("embed_dim", "enc1_hidden", "enc2_hidden", "decoder_hidden"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be positive")


class SequenceClassifier:
    def __init__(self, config: ModelConfig, embeddings=None):
        self.config = config
        self.embeddings = embeddings if embeddings is not None else HashEmbeddings(
            dim=config.embed_dim, n_layers=EMBED_LAYERS, seed=config.seed)
        if self.embeddings.dim != config.embed_dim:
            raise ModelError("embedding provider dim does not match config")
        gen = Rng(config.seed).generator
        d = config.embed_dim
        p = {}
        lim = 1.0 / np.sqrt(d)
        p["w_layer"] = gen.uniform(-lim, lim, size=d)
        p["w_word"] = np.zeros(d) if config.variant == "dlb" else gen.uniform(-lim, lim, size=d)
        self.frozen = {"w_word"} if config.variant == "dlb" else set()
        if config.variant in ("bil", "bild"):
            h1, h2 = config.enc1_hidden, config.enc2_hidden
            for direction in ("f", "b"):
                for k, v in init_lstm(gen, d, h1).items():
                    p[f"enc1_{direction}_{k}"] = v
            for direction in ("f", "b"):
                for k, v in init_lstm(gen, 2 * h1, h2).items():
                    p[f"enc2_{direction}_{k}"] = v
            ctx = 2 * h2
        else:
            ctx = d
        self.ctx_dim = ctx
        if config.variant == "bild":
            hd = config.decoder_hidden
            for task, n_out in (("spk", N_SPEAKER), ("sect", N_SOAP)):
                for k, v in init_lstm(gen, ctx, hd).items():
                    p[f"dec_{task}_{k}"] = v
                lim_p = 1.0 / np.sqrt(hd)
                p[f"proj_{task}_W"] = gen.uniform(-lim_p, lim_p, size=(n_out, hd))
                p[f"proj_{task}_b"] = np.zeros(n_out)
        else:
            lim_h = 1.0 / np.sqrt(ctx)
            for task, n_out in (("spk", N_SPEAKER), ("sect", N_SOAP)):
                p[f"head_{task}_W"] = gen.uniform(-lim_h, lim_h, size=(n_out, ctx))
                p[f"head_{task}_b"] = np.zeros(n_out)
        self.params = p

    def trainable(self) -> list:
        return [name for name in self.params if name not in self.frozen]

    # --- forward ---

    def _embed_utterance(self, tokens) -> np.ndarray:
        real = [t for t in tokens if t != PAD_TOKEN]
        if not real:
            raise ModelError("utterance has no non-pad tokens")
        return np.stack([self.embeddings(t) for t in real])

    def _forward(self, token_lists, dropout: float = 0.0, gen=None,
                 tbptt_len: int | None = None) -> dict:
        cfg = self.config
        p = self.params
        n = len(token_lists)
        if n == 0:
            raise ModelError("empty utterance sequence")
        att_caches = []
        U = np.zeros((n, cfg.embed_dim))
        for i, tokens in enumerate(token_lists):
            E = self._embed_utterance(tokens)
            U[i], cache = attention_forward(E, p["w_layer"], p["w_word"])
            att_caches.append(cache)
        cache = {"att": att_caches, "U": U, "n": n}
        cuts = frozenset(range(tbptt_len, n, tbptt_len)) if tbptt_len else frozenset()
        cache["cuts"] = cuts

        if cfg.variant in ("bil", "bild"):
            def masks(indim, hid):
                if dropout <= 0.0:
                    return None, None
                return dropout_mask(gen, indim, dropout), dropout_mask(gen, hid, dropout)

            enc_caches = {}
            x = U
            for layer, (indim, hid) in (
                (1, (cfg.embed_dim, cfg.enc1_hidden)),
                (2, (2 * cfg.enc1_hidden, cfg.enc2_hidden)),
            ):
                outs = []
                for direction in ("f", "b"):
                    im, rm = masks(indim, hid)
                    h, c = lstm_forward(
                        x,
                        p[f"enc{layer}_{direction}_W"],
                        p[f"enc{layer}_{direction}_U"],
                        p[f"enc{layer}_{direction}_b"],
                        in_mask=im, rec_mask=rm,
                        reverse=direction == "b",
                    )
                    outs.append(h)
                    enc_caches[f"enc{layer}_{direction}"] = c
                x = np.concatenate(outs, axis=1)
            cache["enc"] = enc_caches
            C = x
        else:
            C = U
        cache["C"] = C

        logits = {}
        if cfg.variant == "bild":
            dec_caches = {}
            for task in ("spk", "sect"):
                im = rm = None
                if dropout > 0.0:
                    im = dropout_mask(gen, self.ctx_dim, dropout)
                    rm = dropout_mask(gen, cfg.decoder_hidden, dropout)
                h, c = lstm_forward(C, p[f"dec_{task}_W"], p[f"dec_{task}_U"],
                                    p[f"dec_{task}_b"], in_mask=im, rec_mask=rm)
                dec_caches[task] = (h, c)
                logits[task] = h @ p[f"proj_{task}_W"].T + p[f"proj_{task}_b"]
            cache["dec"] = dec_caches
        else:
            for task in ("spk", "sect"):
                logits[task] = C @ p[f"head_{task}_W"].T + p[f"head_{task}_b"]
        cache["probs"] = {task: softmax(z, axis=1) for task, z in logits.items()}
        return cache

    def predict(self, token_lists) -> tuple:
        """Per-utterance (speaker, section) probability rows, dropout off."""
        cache = self._forward(token_lists)
        return cache["probs"]["spk"], cache["probs"]["sect"]

    def compute_loss(self, token_lists, spk_targets, sect_targets,
                     spk_weights, sect_weights, dropout: float = 0.0,
                     gen=None, tbptt_len: int | None = None) -> float:
        cache = self._forward(token_lists, dropout=dropout, gen=gen, tbptt_len=tbptt_len)
        loss_spk, _ = weighted_ce_loss_and_dlogits(cache["probs"]["spk"], np.asarray(spk_targets, float), np.asarray(spk_weights, float))
        loss_sect, _ = weighted_ce_loss_and_dlogits(cache["probs"]["sect"], np.asarray(sect_targets, float), np.asarray(sect_weights, float))
        return loss_spk + loss_sect

    # --- backward ---

    def loss_and_grads(self, token_lists, spk_targets, sect_targets,
                       spk_weights, sect_weights, dropout: float = 0.0,
                       gen=None, tbptt_len: int | None = None) -> tuple:
        """Multitask loss (sum of the two weighted cross entropies, summed
        over utterances) and gradients for every trainable parameter."""
        cfg = self.config
        p = self.params
        cache = self._forward(token_lists, dropout=dropout, gen=gen, tbptt_len=tbptt_len)
        cuts = cache["cuts"]
        grads = {name: np.zeros_like(val) for name, val in p.items()}
        C = cache["C"]
        dC = np.zeros_like(C)
        total = 0.0
        for task, targets, weights in (
            ("spk", spk_targets, spk_weights),
            ("sect", sect_targets, sect_weights),
        ):
            targets = np.asarray(targets, dtype=float)
            weights = np.asarray(weights, dtype=float)
            loss, dlogits = weighted_ce_loss_and_dlogits(cache["probs"][task], targets, weights)
            total += loss
            if cfg.variant == "bild":
                h, dec_cache = cache["dec"][task]
                grads[f"proj_{task}_W"] += dlogits.T @ h
                grads[f"proj_{task}_b"] += dlogits.sum(axis=0)
                dh = dlogits @ p[f"proj_{task}_W"]
                dC_task, g = lstm_backward(dh, dec_cache, cuts)
                dC += dC_task
                for k, v in g.items():
                    grads[f"dec_{task}_{k}"] += v
            else:
                grads[f"head_{task}_W"] += dlogits.T @ C
                grads[f"head_{task}_b"] += dlogits.sum(axis=0)
                dC += dlogits @ p[f"head_{task}_W"]

        if cfg.variant in ("bil", "bild"):
            h1 = cfg.enc1_hidden
            h2 = cfg.enc2_hidden
            dX1 = None
            for direction, sl in (("f", slice(0, h2)), ("b", slice(h2, 2 * h2))):
                dx, g = lstm_backward(dC[:, sl], cache["enc"][f"enc2_{direction}"], cuts)
                dX1 = dx if dX1 is None else dX1 + dx
                for k, v in g.items():
                    grads[f"enc2_{direction}_{k}"] += v
            dU = None
            for direction, sl in (("f", slice(0, h1)), ("b", slice(h1, 2 * h1))):
                dx, g = lstm_backward(dX1[:, sl], cache["enc"][f"enc1_{direction}"], cuts)
                dU = dx if dU is None else dU + dx
                for k, v in g.items():
                    grads[f"enc1_{direction}_{k}"] += v
        else:
            dU = dC

        for i, att_cache in enumerate(cache["att"]):
            d_wl, d_ww = attention_backward(dU[i], att_cache)
            grads["w_layer"] += d_wl
            grads["w_word"] += d_ww

        for name in self.frozen:
            grads[name] = np.zeros_like(p[name])
        return total, grads

    # --- persistence ---

    def to_record(self) -> dict:
        return {
            "family": "neural",
            "variant": self.config.variant,
            "config": {
                "variant": self.config.variant,
                "embed_dim": self.config.embed_dim,
                "enc1_hidden": self.config.enc1_hidden,
                "enc2_hidden": self.config.enc2_hidden,
                "decoder_hidden": self.config.decoder_hidden,
                "seed": self.config.seed,
            },
            "embeddings": self.embeddings.spec(),
            "params": {name: arr.tolist() for name, arr in self.params.items()},
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_record(), fh)

    @classmethod
    def from_record(cls, rec: dict) -> "SequenceClassifier":
        config = ModelConfig(**rec["config"])
        model = cls(config, embeddings=load_embeddings(rec["embeddings"]))
        for name, val in rec["params"].items():
            if name not in model.params:
                raise ModelError(f"unexpected parameter {name!r} in checkpoint")
            arr = np.asarray(val, dtype=float)
            if arr.shape != model.params[name].shape:
                raise ModelError(f"parameter {name!r} has shape {arr.shape}, "
                                 f"expected {model.params[name].shape}")
            model.params[name] = arr
        return model


def load_model(path) -> SequenceClassifier:
    with open(path, "r", encoding="utf-8") as fh:
        rec = json.load(fh)
    if rec.get("family") != "neural":
        raise ModelError(f"{path} is not a neural checkpoint")
    return SequenceClassifier.from_record(rec)
