"""3D convolutional autoencoder: assembly, training, encoding and
reconstruction error.

Encoder: three (conv3x3x3 + relu + maxpool2) blocks, 20 -> 10 -> 5 -> 3,
then a dense bottleneck to the latent vector. Decoder mirrors it: dense,
three (upsample x2 + conv + relu) blocks to 24^3, a pointwise conv to the
5 material channels, and a center crop back to 20^3. Softmax lives in the
loss (training) or in `decode_probs`. Data flows channels-last internally.
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import tensor_nn as tnn
from .errors import EmptyTrainingSetError, ShapeMismatchError
from .voxel_core import MaterialLattice, N_MATERIALS, from_onehot


@dataclass
class AeParams:
    dims: tuple = (20, 20, 20)
    channels: tuple = (32, 64, 128)
    decoder_channels: tuple = None  # default mirrors the encoder
    latent_dim: int = 256
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.decoder_channels is None:
            c1, c2, _ = self.channels
            self.decoder_channels = (c2, c1, c1)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["dims"] = list(self.dims)
        d["channels"] = list(self.channels)
        d["decoder_channels"] = list(self.decoder_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AeParams":
        d = dict(d)
        d["dims"] = tuple(d["dims"])
        d["channels"] = tuple(d["channels"])
        if d.get("decoder_channels") is not None:
            d["decoder_channels"] = tuple(d["decoder_channels"])
        return cls(**d)


def _ceil_half(n: int) -> int:
    return -(-n // 2)


def onehot_last(lattice: MaterialLattice) -> np.ndarray:
    """Material lattice -> (x, y, z, 5) float32 one-hot channels."""
    ids = np.arange(N_MATERIALS, dtype=np.uint8)
    return (lattice.cells[:, :, :, None] == ids).astype(np.float32)


def _onehot_batch(lattices) -> np.ndarray:
    return np.stack([onehot_last(l) for l in lattices])


class AutoencoderModel:
    def __init__(self, params: AeParams, init_seed: int):
        self.params = params
        self.init_seed = int(init_seed)
        self.history = []
        self.epochs_trained = 0
        self.data_fingerprint = None
        self._build(np.random.default_rng(self.init_seed))

    def _build(self, rng) -> None:
        p = self.params
        c1, c2, c3 = p.channels
        side = p.dims[0]
        s3 = _ceil_half(_ceil_half(_ceil_half(side)))
        self.bottleneck = (s3, s3, s3, c3)
        flat = c3 * s3 ** 3
        self.encoder = tnn.Sequential([
            tnn.Conv3d(N_MATERIALS, c1, rng=rng),
            tnn.Relu(),
            tnn.MaxPool3d(),
            tnn.Conv3d(c1, c2, rng=rng),
            tnn.Relu(),
            tnn.MaxPool3d(),
            tnn.Conv3d(c2, c3, rng=rng),
            tnn.Relu(),
            tnn.MaxPool3d(),
            tnn.Flatten(),
            tnn.Dense(flat, p.latent_dim, rng=rng),
        ])
        d1, d2, d3 = p.decoder_channels
        self.decoder = tnn.Sequential([
            tnn.Dense(p.latent_dim, flat, rng=rng),
            tnn.Reshape(self.bottleneck),
            tnn.Upsample2x(),
            tnn.Conv3d(c3, d1, rng=rng),
            tnn.Relu(),
            tnn.Upsample2x(),
            tnn.Conv3d(d1, d2, rng=rng),
            tnn.Relu(),
            tnn.Upsample2x(),
            tnn.Conv3d(d2, d3, rng=rng),
            tnn.Relu(),
            tnn.Conv3d(d3, N_MATERIALS, kernel=1, rng=rng),
            tnn.CenterCrop(side),
        ])
        self.history = []
        self.epochs_trained = 0
        self.data_fingerprint = None

    def reinitialize(self) -> None:
        """Fresh weights from the model's own seed ("from scratch")."""
        self._build(np.random.default_rng(self.init_seed))

    def randomize(self, rng) -> None:
        """Fresh weights from an external stream (the random-AE strategy)."""
        self._build(rng)

    def all_params(self):
        return self.encoder.params() + self.decoder.params()

    def named_params(self):
        out = []
        for prefix, seq in (("encoder", self.encoder), ("decoder", self.decoder)):
            for i, layer in enumerate(seq.layers):
                for pname, param in zip(("w", "b"), layer.params()):
                    out.append((f"{prefix}.{i}.{pname}", param.value))
        return out

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, arr in self.named_params():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        return h.hexdigest()

    def encode_array(self, x, cache=False):
        """x: (B, x, y, z, 5) channels-last batch -> (B, latent_dim)."""
        return self.encoder.forward(x, cache=cache)

    def decode_array(self, latents, cache=False):
        """(B, latent_dim) -> (B, x, y, z, 5) logits."""
        return self.decoder.forward(latents, cache=cache)


def _check_dims(model: AutoencoderModel, lattice: MaterialLattice) -> None:
    if tuple(lattice.dims) != tuple(model.params.dims):
        raise ShapeMismatchError(tuple(model.params.dims), tuple(lattice.dims), "lattice")


def encode(model: AutoencoderModel, lattice: MaterialLattice) -> np.ndarray:
    """One lattice -> latent vector of `latent_dim` float32 values."""
    _check_dims(model, lattice)
    return model.encode_array(onehot_last(lattice)[None])[0]


def encode_batch(model: AutoencoderModel, lattices, batch_size=64) -> np.ndarray:
    if not lattices:
        return np.zeros((0, model.params.latent_dim), dtype=np.float32)
    for lat in lattices:
        _check_dims(model, lat)
    chunks = []
    for start in range(0, len(lattices), batch_size):
        chunks.append(model.encode_array(_onehot_batch(lattices[start : start + batch_size])))
    return np.concatenate(chunks)


def decode_probs(model: AutoencoderModel, latents) -> np.ndarray:
    """Latent batch -> per-voxel material probabilities, channels-last."""
    return tnn.softmax(model.decode_array(latents), axis=-1)


def reconstruct(model: AutoencoderModel, lattice: MaterialLattice) -> MaterialLattice:
    _check_dims(model, lattice)
    latent = model.encode_array(onehot_last(lattice)[None])
    logits = model.decode_array(latent)
    return from_onehot(np.ascontiguousarray(logits[0].transpose(3, 0, 1, 2)))


def train(model: AutoencoderModel, lattices, epochs=100, batch_size=64, rng=None) -> AutoencoderModel:
    """Re-initialize from the model's seed, then minibatch Adam on softmax
    cross-entropy over shuffled epochs (final partial batch included)."""
    if not lattices:
        raise EmptyTrainingSetError("autoencoder training set is empty")
    if rng is None:
        rng = np.random.default_rng(0)
    for lat in lattices:
        _check_dims(model, lat)
    model.reinitialize()
    p = model.params
    data = _onehot_batch(lattices)
    n = len(lattices)
    params = model.all_params()
    for _ in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            xb = data[idx]
            latent = model.encoder.forward(xb, cache=True)
            logits = model.decoder.forward(latent, cache=True)
            loss, grad = tnn.softmax_ce_last(logits, xb)
            for prm in params:
                prm.zero_grad()
            model.encoder.backward(model.decoder.backward(grad))
            for prm in params:
                tnn.adam_step(prm, lr=p.lr, beta1=p.beta1, beta2=p.beta2, eps=p.eps)
            total += loss * len(idx)
        model.history.append(total / n)
    model.epochs_trained += epochs
    h = hashlib.sha256()
    for lat in lattices:
        h.update(lat.digest().encode())
    model.data_fingerprint = h.hexdigest()
    return model


def reconstruction_error(model: AutoencoderModel, lattices, batch_size=64) -> float:
    """Mean over lattices of (misclassified voxels / total voxels) * 100."""
    if not lattices:
        raise EmptyTrainingSetError("reconstruction_error needs at least one lattice")
    errors = []
    for start in range(0, len(lattices), batch_size):
        chunk = lattices[start : start + batch_size]
        xb = _onehot_batch(chunk)
        logits = model.decode_array(model.encode_array(xb))
        pred = logits.argmax(axis=-1)
        truth = np.stack([l.cells for l in chunk])
        wrong = (pred != truth).reshape(len(chunk), -1).mean(axis=1)
        errors.extend(float(w) * 100.0 for w in wrong)
    return float(np.mean(errors))


def save_model(model: AutoencoderModel, bin_path, json_path) -> None:
    tnn.save_weights(bin_path, model.named_params())
    manifest = {
        "schema": 1,
        "params": model.params.to_dict(),
        "init_seed": model.init_seed,
        "epochs_trained": model.epochs_trained,
        "history": model.history,
        "data_fingerprint": model.data_fingerprint,
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(bin_path, json_path) -> AutoencoderModel:
    with open(json_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    model = AutoencoderModel(AeParams.from_dict(manifest["params"]), manifest["init_seed"])
    model.epochs_trained = manifest["epochs_trained"]
    model.history = list(manifest["history"])
    model.data_fingerprint = manifest["data_fingerprint"]
    loaded = dict(tnn.load_weights(bin_path))
    for name, arr in model.named_params():
        arr[...] = loaded[name]
    return model
