"""End-to-end BroadCF model: neighbour preprocessing, BLS fit, prediction, files."""

from __future__ import annotations

import io
import json
import time
import zipfile
from pathlib import Path

import numpy as np

from . import bls
from .encoding import build_training_set, collaborative_matrix
from .errors import ContractViolation, DataError, ModelFormatError, ModelStateError
from .evaluation import DECODE_MODES, decode_ratings
from .neighbors import COLD, NeighborIndex, build_index
from .ratings import RatingMatrix

FORMAT_NAME = "broadcf-model"
FORMAT_VERSION = 1
_ARRAYS = ("W_z", "beta_z", "W_h", "beta_h", "W")
_EPOCH = (1980, 1, 1, 0, 0, 0)


class BroadCF:
    """Rating predictor: collaborative vectors in, BLS rating strengths out.

    Args:
        k, l: Nearest users / nearest items per collaborative vector.
        n, d_z, m, d_h: Mapped and enhancement group counts and widths.
        lam: Ridge penalty of the readout solve.
        seed: Seed of the random feature layers.
        decode_mode: ``index_weighted`` (default) or ``literal``.
        clamp: Clip predictions into ``[1, d_y]``.
        holdout: Keep a training pair's own rating out of its fill values.
        threads: Worker cap for neighbour ranking.
    """

    def __init__(
        self,
        k: int = 5,
        l: int = 5,
        n: int = 25,
        d_z: int = 10,
        m: int = 25,
        d_h: int = 15,
        lam: float = 1e-8,
        seed: int = 0,
        decode_mode: str = "index_weighted",
        clamp: bool = False,
        holdout: bool = True,
        threads: int | None = None,
    ):
        if decode_mode not in DECODE_MODES:
            raise ContractViolation(f"unknown decode mode {decode_mode!r}")
        self.k, self.l = k, l
        self.hyperparams = bls.BlsHyperparams(n=n, d_z=d_z, m=m, d_h=d_h, lam=lam, seed=seed)
        self.decode_mode = decode_mode
        self.clamp = clamp
        self.holdout = holdout
        self.threads = threads
        self.train_: RatingMatrix | None = None
        self.model_: bls.BlsModel | None = None
        self._index: NeighborIndex | None = None
        self.timings_: dict[str, float] = {}
        self.run_meta: dict = {}

    def config(self) -> dict:
        hp = self.hyperparams
        return {
            "k": self.k,
            "l": self.l,
            "n": hp.n,
            "d_z": hp.d_z,
            "m": hp.m,
            "d_h": hp.d_h,
            "lambda": hp.lam,
            "seed": hp.seed,
            "decode_mode": self.decode_mode,
            "clamp": self.clamp,
            "holdout": self.holdout,
        }

    @property
    def index_(self) -> NeighborIndex:
        if self.train_ is None:
            raise ModelStateError("model has not been fitted")
        if self._index is None:
            self._index = build_index(self.train_, self.k, self.l, threads=self.threads)
        return self._index

    @property
    def trainable_params(self) -> int:
        return self.hyperparams.feature_dim * (self.train_.rating_max if self.train_ is not None else 5)

    def fit(self, train: RatingMatrix, index: NeighborIndex | None = None) -> BroadCF:
        """Build neighbours and training pairs from ``train``, then solve the readout.

        A prebuilt ``index`` over the same matrix (same ``k``/``l``) may be
        passed to skip the neighbour search.
        """
        t0 = time.perf_counter()
        self.train_ = train
        if index is not None and (index.k, index.l) != (self.k, self.l):
            raise ContractViolation("prebuilt index has different k / l")
        self._index = index
        data = build_training_set(train, self.index_, holdout=self.holdout)
        t1 = time.perf_counter()
        model = bls.init_random(self.hyperparams, self.k + self.l, train.rating_max)
        self.model_ = bls.train(model, data.X, data.Y)
        t2 = time.perf_counter()
        self.timings_ = {"preprocess": t1 - t0, "solve": t2 - t1}
        return self

    def _require_fitted(self):
        if self.model_ is None or self.train_ is None:
            raise ModelStateError("model has not been fitted")

    def inputs(self, users, items) -> np.ndarray:
        """Collaborative vectors for (user, item) pairs; ``-1`` marks unknown ids."""
        self._require_fitted()
        return collaborative_matrix(self.train_, self.index_, users, items)

    def strengths(self, users, items) -> np.ndarray:
        return bls.forward(self.model_, self.inputs(users, items))

    def predict(self, users, items, decode_mode: str | None = None) -> np.ndarray:
        mode = decode_mode or self.decode_mode
        pred = decode_ratings(self.strengths(users, items), mode)
        if self.clamp:
            pred = np.clip(pred, 1.0, self.train_.rating_max)
        return pred

    def predict_one(self, user: int, item: int, decode_mode: str | None = None) -> float:
        return float(self.predict([user], [item], decode_mode)[0])

    def lookup_ids(self, raw_user: str, raw_item: str) -> tuple[int, int]:
        """Map raw identifiers to indices, ``-1`` when not seen in the dataset."""
        self._require_fitted()

        def find(ids, raw):
            if ids is None:
                try:
                    return int(raw)
                except ValueError:
                    return COLD
            try:
                return ids.index(raw)
            except ValueError:
                return COLD

        return find(self.train_.user_ids, raw_user), find(self.train_.item_ids, raw_item)

    def save(self, path, run: dict | None = None) -> None:
        """Write a single self-describing zip: ``meta.json`` plus ``.npy`` arrays.

        ``run`` is free-form context (e.g. split settings) stored alongside.
        Entries carry a fixed timestamp so identical models give identical bytes.
        """
        self._require_fitted()
        train = self.train_
        meta = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "config": self.config(),
            "input_dim": self.model_.input_dim,
            "d_y": self.model_.d_y,
            "rating_max": train.rating_max,
            "num_users": train.num_users,
            "num_items": train.num_items,
            "train_fingerprint": train.fingerprint(),
            "user_ids": train.user_ids,
            "item_ids": train.item_ids,
            "run": run if run is not None else self.run_meta,
        }
        arrays = {name: getattr(self.model_, name) for name in _ARRAYS}
        arrays["train_triples"] = train.triples()
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            zf.writestr(_entry("meta.json"), json.dumps(meta, sort_keys=True, indent=1))
            for name, arr in arrays.items():
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
                zf.writestr(_entry(f"{name}.npy"), buf.getvalue())

    @classmethod
    def load(cls, path, threads: int | None = None) -> BroadCF:
        path = Path(path)
        try:
            zf = zipfile.ZipFile(path)
        except FileNotFoundError as exc:
            raise DataError(f"model file {path} not found") from exc
        except (zipfile.BadZipFile, OSError) as exc:
            raise ModelFormatError(f"{path} is not a BroadCF model file: {exc}") from exc
        try:
            with zf:
                meta = json.loads(zf.read("meta.json"))
                if meta.get("format") != FORMAT_NAME:
                    raise ModelFormatError(f"{path} is not a BroadCF model file")
                if meta.get("version") != FORMAT_VERSION:
                    raise ModelFormatError(f"unsupported model format version {meta.get('version')}")
                arrays = {
                    name: np.lib.format.read_array(io.BytesIO(zf.read(f"{name}.npy")), allow_pickle=False)
                    for name in (*_ARRAYS, "train_triples")
                }
        except ModelFormatError:
            raise
        except (KeyError, ValueError, zipfile.BadZipFile, OSError) as exc:
            raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc

        cfg = meta["config"]
        rec = cls(
            k=cfg["k"],
            l=cfg["l"],
            n=cfg["n"],
            d_z=cfg["d_z"],
            m=cfg["m"],
            d_h=cfg["d_h"],
            lam=cfg["lambda"],
            seed=cfg["seed"],
            decode_mode=cfg["decode_mode"],
            clamp=cfg["clamp"],
            holdout=cfg["holdout"],
            threads=threads,
        )
        t = arrays["train_triples"].reshape(-1, 3)
        try:
            rec.train_ = RatingMatrix(
                meta["num_users"],
                meta["num_items"],
                t[:, 0],
                t[:, 1],
                t[:, 2],
                rating_max=meta["rating_max"],
                user_ids=meta["user_ids"],
                item_ids=meta["item_ids"],
            )
        except ContractViolation as exc:
            raise ModelFormatError(f"corrupt training data in {path}: {exc}") from exc
        if rec.train_.fingerprint() != meta["train_fingerprint"]:
            raise ModelFormatError(f"training data in {path} does not match its fingerprint")
        hp = rec.hyperparams
        expected = {
            "W_z": (hp.n, meta["input_dim"], hp.d_z),
            "beta_z": (hp.n, hp.d_z),
            "W_h": (hp.m, hp.n * hp.d_z, hp.d_h),
            "beta_h": (hp.m, hp.d_h),
            "W": (hp.feature_dim, meta["d_y"]),
        }
        for name, shape in expected.items():
            if arrays[name].shape != shape:
                raise ModelFormatError(f"{name} has shape {arrays[name].shape}, expected {shape}")
        rec.run_meta = meta.get("run") or {}
        rec.model_ = bls.BlsModel(
            hp, meta["input_dim"], meta["d_y"], *(arrays[name] for name in _ARRAYS), trained=True
        )
        return rec


def _entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info
