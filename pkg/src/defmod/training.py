"""Training loop: minibatch Adam on label-smoothed NLL with teacher
forcing, per-epoch validation, best-model checkpointing, and the
checkpoint directory layout (params.bin + meta.json).
"""

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import load_params, save_params
from .config import ModelConfig, config_from_dict
from .data import BOS, EOS, Batch, Vocab, encode_batch
from .models import build_model
from .optim import Adam, clip_global_norm

log = logging.getLogger(__name__)

PARAMS_FILE = "params.bin"
META_FILE = "meta.json"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainedModel:
    model: object
    config: ModelConfig
    src_vocab: Vocab
    tgt_vocab: Vocab
    char_vocab: Vocab | None = None

    def save(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        save_params(os.path.join(out_dir, PARAMS_FILE), dict(self.model.named_params()))
        meta = {
            "config": self.config.to_dict(),
            "src_vocab": self.src_vocab.id_to_token,
            "tgt_vocab": self.tgt_vocab.id_to_token,
            "char_vocab": self.char_vocab.id_to_token if self.char_vocab else None,
        }
        with open(os.path.join(out_dir, META_FILE), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, ensure_ascii=False, indent=1)

    @classmethod
    def load(cls, ckpt_dir) -> "TrainedModel":
        with open(os.path.join(ckpt_dir, META_FILE), encoding="utf-8") as fh:
            meta = json.load(fh)
        config = config_from_dict(meta["config"])
        src_vocab = Vocab(meta["src_vocab"][4:])
        tgt_vocab = Vocab(meta["tgt_vocab"][4:])
        char_vocab = Vocab(meta["char_vocab"][4:]) if meta.get("char_vocab") else None
        model = build_model(config, len(src_vocab), len(tgt_vocab),
                            len(char_vocab) if char_vocab else 0)
        stored = load_params(os.path.join(ckpt_dir, PARAMS_FILE))
        for name, param in model.named_params():
            if name not in stored:
                raise KeyError(f"checkpoint missing parameter {name!r}")
            if stored[name].shape != param.data.shape:
                raise ValueError(f"checkpoint shape mismatch for {name!r}")
            param.data = np.ascontiguousarray(stored[name])
        return cls(model=model, config=config, src_vocab=src_vocab,
                   tgt_vocab=tgt_vocab, char_vocab=char_vocab)


@dataclass
class TrainingHistory:
    steps: list = field(default_factory=list)        # (step, train_loss)
    validations: list = field(default_factory=list)  # (step, valid_loss)
    best_valid: float = float("inf")


def _example_tuples(batch: Batch):
    """Unpack a padded batch into per-example id lists via the masks."""
    for i in range(len(batch)):
        sem = batch.sememes[i, batch.sememe_mask[i]].tolist()
        full = batch.defs[i, batch.def_mask[i]].tolist()  # BOS ... EOS
        yield int(batch.words[i]), sem, batch.chars[i], full[:-1], full[1:]


def batch_loss(model, batch: Batch, smoothing: float) -> T.Tensor:
    """Label-smoothed NLL, averaged over every target position in the
    batch (one concatenated cross-entropy call)."""
    parts = []
    targets = []
    for word, sem, chars, prefix, target in _example_tuples(batch):
        parts.append(model.logits(word, sem, chars, prefix))
        targets.extend(target)
    return T.cross_entropy_label_smoothed(T.concat(parts, axis=0), targets, smoothing)


def token_accuracy(model, batches) -> float:
    """Teacher-forced argmax accuracy over all target positions."""
    correct = total = 0
    for batch in batches:
        for word, sem, chars, prefix, target in _example_tuples(batch):
            pred = np.argmax(model.logits(word, sem, chars, prefix).data, axis=-1)
            correct += int((pred == np.asarray(target)).sum())
            total += len(target)
    return correct / total if total else 0.0


def evaluate_loss(model, batches, smoothing: float) -> float:
    losses, counts = [], []
    for batch in batches:
        losses.append(batch_loss(model, batch, smoothing).item())
        counts.append(int(batch.def_mask.sum()) - len(batch))
    total = sum(counts)
    return sum(l * c for l, c in zip(losses, counts)) / total if total else 0.0


def _make_batches(entries, src_vocab, tgt_vocab, char_vocab, batch_size,
                  rng=None, shuffle=False):
    order = list(range(len(entries)))
    if shuffle:
        order = [int(i) for i in rng.permutation(len(entries))]
    return [
        encode_batch([entries[i] for i in order[s:s + batch_size]],
                     src_vocab, tgt_vocab, char_vocab)
        for s in range(0, len(entries), batch_size)
    ]


def train(trained: TrainedModel, train_entries, valid_entries=None,
          out_dir=None, max_steps: int | None = None,
          step_callback=None) -> TrainingHistory:
    """Run minibatch Adam over the training entries.

    Stops after config.epochs epochs, after config.patience epochs without
    validation improvement, or after max_steps optimizer steps. The best
    validation model is checkpointed into out_dir when given. Fully
    deterministic for a fixed config.seed.
    """
    cfg = trained.config
    model = trained.model
    if not train_entries:
        raise ValueError("empty training split")
    if cfg.use_char_cnn and trained.char_vocab is None:
        raise ValueError("use_char_cnn needs a character vocabulary on the model bundle")
    rng = np.random.default_rng(cfg.seed)
    params = [p for _, p in model.named_params() if p.requires_grad]
    opt = Adam(params, lr=cfg.lr)
    history = TrainingHistory()
    valid_batches = (_make_batches(valid_entries, trained.src_vocab, trained.tgt_vocab,
                                   trained.char_vocab, cfg.batch)
                     if valid_entries else None)
    step = 0
    epochs_since_best = 0
    for epoch in range(cfg.epochs):
        batches = _make_batches(train_entries, trained.src_vocab, trained.tgt_vocab,
                                trained.char_vocab, cfg.batch, rng=rng, shuffle=True)
        for batch in batches:
            try:
                loss = batch_loss(model, batch, cfg.smoothing)
                opt.zero_grad()
                loss.backward()
                clip_global_norm(params, cfg.grad_clip)
            except FloatingPointError as exc:
                raise TrainingDiverged(
                    f"non-finite loss/gradient at step {step} (epoch {epoch}): {exc}"
                ) from exc
            opt.step()
            step += 1
            history.steps.append((step, loss.item()))
            if step_callback is not None:
                step_callback(step, loss.item())
            if max_steps is not None and step >= max_steps:
                break
        if valid_batches is not None:
            vloss = evaluate_loss(model, valid_batches, cfg.smoothing)
            history.validations.append((step, vloss))
            log.info("epoch %d step %d valid_loss %.6f", epoch + 1, step, vloss)
            if vloss < history.best_valid:
                history.best_valid = vloss
                epochs_since_best = 0
                if out_dir is not None:
                    trained.save(out_dir)
            else:
                epochs_since_best += 1
                if epochs_since_best >= cfg.patience:
                    log.info("stopping: no validation improvement in %d epochs",
                             cfg.patience)
                    break
        if max_steps is not None and step >= max_steps:
            break
    if out_dir is not None and history.best_valid == float("inf"):
        trained.save(out_dir)  # no validation split: keep the final model
    return history


def entries_to_eval_batches(trained: TrainedModel, entries):
    return _make_batches(entries, trained.src_vocab, trained.tgt_vocab,
                         trained.char_vocab, trained.config.batch)
