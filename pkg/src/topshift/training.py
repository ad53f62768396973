"""Training loop, neural scorer and checkpoints."""
from __future__ import annotations

import copy
import logging
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .config import TrainConfig
from .corpus import Dataset
from .decoding import Scorer, beam_parse, greedy_parse_many
from .errors import CheckpointError, EmptyCorpus, NoLegalActions, StepLimitExceeded, VocabMismatch
from .masks import initial_masks, update_masks
from .metrics import exact_match
from .model import ModelConfig, StackTransformer, legal_log_softmax, sequence_loss
from .oracle import oracle_actions
from .transitions import System, apply_action, init_config, legal_actions
from .tree import iter_constituents
from .vocab import ActionVocab, TokenVocab

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "topshift-checkpoint"
CHECKPOINT_VERSION = 1


# --------------------------------------------------------------------------
# learning-rate schedule

class InverseSqrtSchedule:
    """Linear warmup from ``init_lr`` to ``peak`` then ``peak * sqrt(warmup / s)``, floored."""

    def __init__(self, peak, warmup, init_lr=1e-7, min_lr=1e-9):
        self.peak, self.warmup, self.init_lr, self.min_lr = peak, warmup, init_lr, min_lr

    def __call__(self, step: int) -> float:
        if self.warmup and step <= self.warmup:
            return self.init_lr + (self.peak - self.init_lr) * step / self.warmup
        lr = self.peak * math.sqrt(max(self.warmup, 1) / max(step, 1))
        return max(lr, self.min_lr)


# --------------------------------------------------------------------------
# example encoding

@dataclass
class EncodedExample:
    tokens: np.ndarray        # (n,) token ids
    targets: np.ndarray       # (T,) action ids
    stack: np.ndarray         # (T, n) bool, configuration before each action
    buffer: np.ndarray        # (T, n) bool
    legal: np.ndarray         # (T, |A|) bool
    features: Optional[np.ndarray] = None


def encode_example(tree, system, tokens: TokenVocab, actions: ActionVocab, features=None) -> EncodedExample:
    gold = oracle_actions(tree, system)
    config = init_config(tree.utterance, system)
    masks = initial_masks(config.n)
    st, bu, lg, tg = [], [], [], []
    for a in gold:
        st.append(masks.stack)
        bu.append(masks.buffer)
        lg.append(actions.legal_mask(config))
        tg.append(actions.index[a])
        masks = update_masks(masks, a, config, check=False)
        config = apply_action(config, a, check=False)
    return EncodedExample(np.array(tokens.encode(tree.utterance)), np.array(tg), np.array(st),
                          np.array(bu), np.array(lg), features)


def make_batches(examples: Sequence[EncodedExample], max_tokens: int, rng=None) -> list:
    """Group example indices so that batch_size * longest action sequence <= max_tokens."""
    order = sorted(range(len(examples)), key=lambda i: (len(examples[i].targets), i))
    batches, cur, longest = [], [], 0
    for i in order:
        t = len(examples[i].targets)
        if cur and max(longest, t) * (len(cur) + 1) > max_tokens:
            batches.append(cur)
            cur, longest = [], 0
        cur.append(i)
        longest = max(longest, t)
    if cur:
        batches.append(cur)
    if rng is not None:
        rng.shuffle(batches)
    return batches


def collate(examples: Sequence[EncodedExample], n_actions: int, dtype=torch.float64) -> dict:
    b = len(examples)
    n = max(len(e.tokens) for e in examples)
    t = max(len(e.targets) for e in examples)
    tokens = torch.zeros(b, n, dtype=torch.long)
    src_mask = torch.zeros(b, n, dtype=torch.bool)
    act_in = torch.full((b, t), n_actions, dtype=torch.long)
    targets = torch.zeros(b, t, dtype=torch.long)
    tgt_mask = torch.zeros(b, t, dtype=torch.bool)
    stack = torch.zeros(b, t, n, dtype=torch.bool)
    buffer = torch.zeros(b, t, n, dtype=torch.bool)
    legal = torch.ones(b, t, n_actions, dtype=torch.bool)   # padded steps stay all-legal (no NaN)
    features = None
    if examples[0].features is not None:
        features = torch.zeros(b, n, examples[0].features.shape[1], dtype=dtype)
    for i, e in enumerate(examples):
        ni, ti = len(e.tokens), len(e.targets)
        tokens[i, :ni] = torch.from_numpy(e.tokens)
        src_mask[i, :ni] = True
        targets[i, :ti] = torch.from_numpy(e.targets)
        act_in[i, 1:ti] = targets[i, : ti - 1]
        tgt_mask[i, :ti] = True
        stack[i, :ti, :ni] = torch.from_numpy(e.stack)
        buffer[i, :ti, :ni] = torch.from_numpy(e.buffer)
        legal[i, :ti] = torch.from_numpy(e.legal)
        if features is not None:
            features[i, :ni] = torch.as_tensor(e.features, dtype=dtype)
    return dict(tokens=tokens, src_mask=src_mask, act_in=act_in, targets=targets,
                tgt_mask=tgt_mask, stack_masks=stack, buffer_masks=buffer, legal=legal,
                features=features)


def batch_loss(model: StackTransformer, batch: dict, smoothing: float):
    logits = model(batch)
    logp = legal_log_softmax(logits, batch["legal"])
    return sequence_loss(logp, batch["targets"], batch["legal"], batch["tgt_mask"], smoothing)


# --------------------------------------------------------------------------
# parser bundle + scorer

class Parser:
    """A trained model together with its vocabularies."""

    def __init__(self, model: StackTransformer, tokens: TokenVocab, actions: ActionVocab,
                 config: Optional[TrainConfig] = None):
        self.model = model
        self.tokens = tokens
        self.actions = actions
        self.config = config or TrainConfig(system=actions.system.value)

    @property
    def system(self) -> System:
        return self.actions.system

    @property
    def dtype(self):
        return next(self.model.parameters()).dtype

    def scorer(self, features=None) -> "NeuralScorer":
        return NeuralScorer(self, features)

    def parse(self, utterances, beam: int = 1, features=None, completable: bool = True) -> list:
        """Best ParseResult per utterance (None when decoding fails).

        ``completable`` drops actions after which no final configuration fits
        in the step budget, so a trained model always yields a tree.
        """
        scorer = self.scorer(features)
        self.model.eval()
        with torch.no_grad():
            if beam == 1:
                return greedy_parse_many(utterances, scorer, self.system, completable=completable,
                                         errors="none")
            out = []
            for u in utterances:
                try:
                    out.append(beam_parse(u, scorer, self.system, beam, completable=completable)[0])
                except (StepLimitExceeded, NoLegalActions):
                    out.append(None)
            return out

    def exact_match(self, dataset: Dataset, beam: int = 1, features=None) -> float:
        results = self.parse([ex.utterance for ex in dataset], beam, features)
        return exact_match([r and r.tree for r in results], dataset.trees)


class NeuralScorer(Scorer):
    """Scores hypotheses with a :class:`StackTransformer`, batching across hypotheses."""

    def __init__(self, parser: Parser, features=None):
        self.parser = parser
        self.model = parser.model
        self.vocab = parser.actions
        self.labels = self.vocab.labels
        self.features = features    # utterance tuple -> (n, feature_dim) array

    def legal(self, config):
        # actions outside the trained inventory (unseen ReduceK arities) are never predicted
        return [a for a in legal_actions(config, self.labels) if a in self.vocab.index]

    def prepare(self, utterances):
        utterances = [tuple(u) for u in utterances]
        if not utterances:
            return []
        n = max(len(u) for u in utterances)
        b = len(utterances)
        tokens = torch.zeros(b, n, dtype=torch.long)
        src_mask = torch.zeros(b, n, dtype=torch.bool)
        feats = None
        if self.model.cfg.feature_dim:
            feats = torch.zeros(b, n, self.model.cfg.feature_dim, dtype=self.parser.dtype)
        for i, u in enumerate(utterances):
            tokens[i, : len(u)] = torch.tensor(self.parser.tokens.encode(u))
            src_mask[i, : len(u)] = True
            if feats is not None:
                feats[i, : len(u)] = torch.as_tensor(self.features[u], dtype=self.parser.dtype)
        with torch.no_grad():
            enc = self.model.encode(tokens, src_mask, feats)
        return [enc[i, : len(u)] for i, u in enumerate(utterances)]

    def score(self, items):
        b = len(items)
        n = max(ctx.shape[0] for ctx, _, _ in items)
        t = max(len(h.actions) for _, h, _ in items) + 1
        d = items[0][0].shape[1]
        na = len(self.vocab)
        enc = items[0][0].new_zeros(b, n, d)
        src_mask = torch.zeros(b, n, dtype=torch.bool)
        act_in = torch.full((b, t), self.vocab.bos, dtype=torch.long)
        stack = torch.zeros(b, t, n, dtype=torch.bool)
        buffer = torch.zeros(b, t, n, dtype=torch.bool)
        tgt_mask = torch.zeros(b, t, dtype=torch.bool)
        legal = torch.zeros(b, na, dtype=torch.bool)
        last = []
        for i, (ctx, h, acts) in enumerate(items):
            ni, ti = ctx.shape[0], len(h.actions) + 1
            enc[i, :ni] = ctx
            src_mask[i, :ni] = True
            if h.actions:
                act_in[i, 1:ti] = torch.tensor([self.vocab.index[a] for a in h.actions])
            stack[i, :ti, :ni] = torch.from_numpy(np.stack([m.stack for m in h.masks]))
            buffer[i, :ti, :ni] = torch.from_numpy(np.stack([m.buffer for m in h.masks]))
            tgt_mask[i, :ti] = True
            legal[i, [self.vocab.index[a] for a in acts]] = True
            last.append(ti - 1)
        with torch.no_grad():
            logits = self.model.decode(enc, src_mask, act_in, stack, buffer, tgt_mask)
            logits = logits[torch.arange(b), torch.tensor(last)]
            logp = legal_log_softmax(logits, legal).numpy()
        return [logp[i, [self.vocab.index[a] for a in acts]] for i, (_, _, acts) in enumerate(items)]


# --------------------------------------------------------------------------
# training

@dataclass
class TrainResult:
    parser: Parser
    log: list = field(default_factory=list)     # one dict per epoch
    best: list = field(default_factory=list)    # (valid EM, epoch) of averaged checkpoints
    final_em: Optional[float] = None


def build_vocabs(dataset: Dataset, system) -> tuple:
    tokens = TokenVocab.from_utterances(ex.utterance for ex in dataset)
    seqs = [oracle_actions(ex.tree, system) for ex in dataset]
    actions = ActionVocab.from_action_sequences(system, dataset.label_vocab, seqs)
    return tokens, actions


def check_vocab(dataset: Dataset, actions: ActionVocab, strict: bool = False) -> list:
    """Labels of ``dataset`` missing from the action inventory."""
    unseen = sorted({str(c.label) for ex in dataset for c in iter_constituents(ex.tree.root)}
                    - {str(l) for l in actions.labels})
    if unseen:
        msg = f"labels unseen in training: {', '.join(unseen)}"
        if strict:
            raise VocabMismatch(msg)
        log.warning(msg)
    return unseen


def new_model(cfg: TrainConfig, n_tokens: int, n_actions: int, feature_dim: int = 0) -> StackTransformer:
    mc = cfg.model_config()
    mc.feature_dim = feature_dim
    model = StackTransformer(mc, n_tokens, n_actions)
    return model.double() if cfg.dtype == "float64" else model.float()


def average_state_dicts(states: Sequence[dict]) -> dict:
    out = {}
    for k in states[0]:
        if states[0][k].is_floating_point():
            out[k] = sum(s[k] for s in states) / len(states)
        else:
            out[k] = states[0][k].clone()
    return out


def train(train_set: Dataset, valid_set: Optional[Dataset] = None, cfg: Optional[TrainConfig] = None,
          features=None, time_limit: Optional[float] = None, progress=None) -> TrainResult:
    """Train a parser; model selection uses greedy exact match on ``valid_set``.

    Without a validation set the training set is used for selection.
    ``features`` optionally maps utterance tuples to frozen input vectors.
    """
    cfg = cfg or TrainConfig()
    if not len(train_set):
        raise EmptyCorpus("training set is empty")
    valid_set = valid_set if valid_set is not None and len(valid_set) else train_set
    system = System(cfg.system)
    torch.manual_seed(cfg.seed)
    rng = random.Random(cfg.seed)

    tokens, actions = build_vocabs(train_set, system)
    check_vocab(valid_set, actions)
    feature_dim = 0
    if features is not None:
        feature_dim = np.asarray(next(iter(features.values()))).shape[1]
    model = new_model(cfg, len(tokens), len(actions), feature_dim)
    parser = Parser(model, tokens, actions, cfg)
    dtype = parser.dtype

    encoded = [encode_example(ex.tree, system, tokens, actions,
                              None if features is None else np.asarray(features[ex.utterance]))
               for ex in train_set]
    opt = torch.optim.Adam(model.parameters(), lr=cfg.warmup_init_lr,
                           betas=(cfg.adam_beta1, cfg.adam_beta2), eps=cfg.adam_eps,
                           weight_decay=cfg.weight_decay)
    sched = InverseSqrtSchedule(cfg.lr, cfg.warmup_updates, cfg.warmup_init_lr, cfg.min_lr)

    history, best = [], []      # best: (em, epoch, state_dict)
    step = 0
    start = time.monotonic()
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        total, count = 0.0, 0
        for idx in make_batches(encoded, cfg.max_tokens, rng):
            batch = collate([encoded[i] for i in idx], len(actions), dtype)
            step += 1
            for g in opt.param_groups:
                g["lr"] = sched(step)
            loss, n = batch_loss(model, batch, cfg.label_smoothing)
            opt.zero_grad()
            loss.backward()
            if cfg.clip_norm > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.clip_norm)
            opt.step()
            total += loss.item() * n
            count += n
        entry = {"epoch": epoch, "step": step, "lr": sched(step), "train_loss": total / count,
                 "seconds": time.monotonic() - start}
        if epoch % cfg.valid_every == 0 or epoch == cfg.max_epochs:
            em = parser.exact_match(valid_set, features=features)
            entry["valid_em"] = em
            best.append((em, epoch, copy.deepcopy(model.state_dict())))
            best.sort(key=lambda b: (-b[0], -b[1]))
            del best[cfg.average_best:]
        history.append(entry)
        if progress:
            progress(entry)
        if entry.get("valid_em", 0.0) >= cfg.stop_at_em:
            break
        if time_limit is not None and time.monotonic() - start > time_limit:
            log.warning("time limit reached after epoch %d", epoch)
            break

    if best:
        model.load_state_dict(average_state_dicts([b[2] for b in best]))
        final = parser.exact_match(valid_set, features=features)
        # averaging is meant to help; fall back to the single best if it hurts
        if final < best[0][0]:
            model.load_state_dict(best[0][2])
            final = best[0][0]
            history.append({"averaged": False, "valid_em": final})
        else:
            history.append({"averaged": True, "valid_em": final})
    else:
        final = None
    return TrainResult(parser, history, [(b[0], b[1]) for b in best], final)


# --------------------------------------------------------------------------
# checkpoints

def save_checkpoint(parser: Parser, path):
    torch.save({
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": parser.model.cfg.to_dict(),
        "train_config": parser.config.to_dict(),
        "system": parser.system.value,
        "tokens": list(parser.tokens.itos),
        "actions": parser.actions.to_list(),
        "state_dict": parser.model.state_dict(),
    }, path)


def load_checkpoint(path) -> Parser:
    try:
        data = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(data, dict) or data.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a topshift checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {data.get('version')}")
    from .config import make_config
    cfg = make_config(data["train_config"])
    tokens = TokenVocab([])
    tokens.itos = list(data["tokens"])
    tokens.stoi = {w: i for i, w in enumerate(tokens.itos)}
    actions = ActionVocab.from_list(data["system"], data["actions"])
    mc = ModelConfig.from_dict(data["model_config"])
    model = StackTransformer(mc, len(tokens), len(actions))
    state = data["state_dict"]
    expected = model.state_dict()
    missing = set(expected) - set(state)
    extra = set(state) - set(expected)
    if missing or extra:
        raise CheckpointError(f"parameter names differ (missing {sorted(missing)}, unexpected {sorted(extra)})")
    for k, v in expected.items():
        if tuple(state[k].shape) != tuple(v.shape):
            raise CheckpointError(f"{k}: shape {tuple(state[k].shape)} != {tuple(v.shape)}")
    model = model.to(next(iter(state.values())).dtype)
    model.load_state_dict(state)
    model.eval()
    return Parser(model, tokens, actions, cfg)


# --------------------------------------------------------------------------
# external features

def load_features(path) -> list:
    """Per-utterance feature matrices: one line of floats per token, blank line between utterances."""
    blocks, cur = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            cur.append([float(x) for x in line.split()])
        elif cur:
            blocks.append(np.array(cur))
            cur = []
    if cur:
        blocks.append(np.array(cur))
    return blocks
