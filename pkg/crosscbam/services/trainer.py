"""Training loop: batches, composite loss, SGD with poly LR, validation mIoU and checkpoints."""
from __future__ import annotations

import logging
import sys
import threading
from pathlib import Path
from typing import Iterator, Optional, Tuple

import numpy as np
from tqdm import tqdm

from crosscbam.config import RunConfig
from crosscbam.data.checkpoint import save_checkpoint
from crosscbam.data.datasets import SegmentationDataset, SyntheticDataset, iterate_batches, open_dataset
from crosscbam.errors import ConfigurationError, CrossCbamError
from crosscbam.models.data import SyntheticSceneSpec
from crosscbam.models.training import TrainingRun
from crosscbam.nn.losses import composite_loss
from crosscbam.nn.network import CrossCbamNet, build_network
from crosscbam.nn.optim import SGD
from crosscbam.nn.params import Mode
from crosscbam.nn.tensor import Precision, Tensor
from crosscbam.services.inference import predict_labels
from crosscbam.services.metrics import ConfusionMatrix

VAL_SEED_OFFSET = 7919


def build_datasets(cfg: RunConfig) -> Tuple[SegmentationDataset, SegmentationDataset]:
    if cfg.dataset == "synthetic":
        common = dict(num_classes=cfg.network.num_classes, canvas=cfg.canvas, noise=cfg.noise)
        train = SyntheticDataset(SyntheticSceneSpec(seed=cfg.seed, n_samples=cfg.n_train, **common))
        if cfg.val_split == "noise":
            # the first n_val training scenes under a fresh noise draw
            val_spec = SyntheticSceneSpec(
                seed=cfg.seed, n_samples=cfg.n_val, noise_seed=cfg.seed + VAL_SEED_OFFSET, **common
            )
        else:
            val_spec = SyntheticSceneSpec(seed=cfg.seed + VAL_SEED_OFFSET, n_samples=cfg.n_val, **common)
        val = SyntheticDataset(val_spec)
        return train, val
    train = open_dataset(cfg.dataset, cfg.data_root, "train")
    val = open_dataset(cfg.dataset, cfg.data_root, "val")
    if train.num_classes != cfg.network.num_classes:
        raise ConfigurationError(
            f"{cfg.dataset} has {train.num_classes} classes but the network is configured for {cfg.network.num_classes}"
        )
    return train, val


class Trainer:
    """Runs one training job; owns its model exclusively for the duration of :meth:`train`."""

    def __init__(
        self,
        cfg: RunConfig,
        *,
        train_set: Optional[SegmentationDataset] = None,
        val_set: Optional[SegmentationDataset] = None,
        model: Optional[CrossCbamNet] = None,
        run: Optional[TrainingRun] = None,
        dtype: "Precision | str" = Precision.SINGLE,
        logger: Optional[logging.Logger] = None,
        stop_event: Optional[threading.Event] = None,
        progress: Optional[bool] = None,
    ):
        self.cfg = cfg
        self.logger = logger or logging.getLogger(__name__)
        if train_set is None or val_set is None:
            built_train, built_val = build_datasets(cfg)
            train_set = built_train if train_set is None else train_set
            val_set = built_val if val_set is None else val_set
        self.train_set = train_set
        self.val_set = val_set
        self.model = model or build_network(cfg.network, seed=cfg.seed, dtype=dtype)
        self.optimizer = SGD(self.model.named_parameters(), cfg.optim)
        self.run = run or TrainingRun(config=cfg.to_dict())
        self.run.max_iter = cfg.optim.max_iter
        self.stop_event = stop_event or threading.Event()
        self.progress = sys.stderr.isatty() if progress is None else progress
        self.output_dir = Path(cfg.output_dir) / self.run.run_id

    def _batches(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        epoch = 0
        while True:
            produced = False
            for batch in iterate_batches(
                self.train_set,
                self.cfg.batch_size,
                epoch=epoch,
                seed=self.cfg.seed,
                augment_cfg=self.cfg.augment,
                workers=self.cfg.workers,
                logger=self.logger,
            ):
                produced = True
                yield batch
            if not produced:
                raise ConfigurationError(
                    f"training set of {len(self.train_set)} samples is smaller than batch_size {self.cfg.batch_size}"
                )
            epoch += 1

    def train_step(self, images: np.ndarray, masks: np.ndarray) -> Tuple[float, float]:
        self.model.set_mode(Mode.TRAIN)
        output = self.model(Tensor(images.astype(self.model.dtype.dtype)))
        loss = composite_loss(output, masks, self.cfg.loss)
        self.optimizer.zero_grad()
        loss.backward()
        lr = self.optimizer.step()
        return float(loss.item()), lr

    def evaluate(self, dataset: Optional[SegmentationDataset] = None) -> ConfusionMatrix:
        dataset = self.val_set if dataset is None else dataset
        cm = ConfusionMatrix(self.cfg.network.num_classes, self.cfg.loss.ignore_index, self.logger)
        for index in range(len(dataset)):
            sample = dataset[index]
            cm.accumulate(predict_labels(self.model, sample.image[None])[0], sample.mask)
        return cm

    def save(self, tag: str) -> Path:
        path = save_checkpoint(
            self.model,
            self.output_dir / f"{tag}.xcbm",
            extra={"iteration": self.optimizer.iteration, "seed": self.cfg.seed},
            logger=self.logger,
        )
        self.run.checkpoints.append(str(path))
        return path

    def train(self) -> TrainingRun:
        cfg = self.cfg
        max_iter = cfg.optim.max_iter
        self.run.start()
        self.logger.info(
            f"Training run {self.run.run_id}: {cfg.network.variant.name} variant, "
            f"{self.model.num_parameters()} parameters, {max_iter} iterations, batch {cfg.batch_size}"
        )
        batches = self._batches()
        bar = tqdm(range(max_iter), ncols=120, disable=not self.progress)
        stopped = False
        try:
            for it in bar:
                if self.stop_event.is_set():
                    self.logger.info(f"Run {self.run.run_id} stopped at iteration {it}")
                    stopped = True
                    break
                images, masks = next(batches)
                loss, lr = self.train_step(images, masks)
                if not np.isfinite(loss):
                    raise CrossCbamError(f"loss became non-finite at iteration {it}")
                done = it + 1
                self.run.log_loss(done, lr, loss)
                bar.set_description(f"TRAIN | iter {done} | lr {lr:.5f} | loss {loss:.4f}")
                if done % cfg.log_interval == 0:
                    self.logger.info(f"iter {done}/{max_iter} lr {lr:.6f} loss {loss:.5f}")
                if done % cfg.val_interval == 0 or done == max_iter:
                    miou = self.evaluate().miou()
                    self.run.log_validation(done, miou)
                    self.logger.info(f"iter {done} validation mIoU {miou:.4f}")
                if done % cfg.checkpoint_interval == 0:
                    self.save(f"iter_{done:06d}")
            if stopped:
                self.save(f"stopped_{self.optimizer.iteration:06d}")
                self.run.stop()
            else:
                if cfg.eval_train:
                    self.run.train_miou = self.evaluate(self.train_set).miou()
                    self.logger.info(f"final train mIoU {self.run.train_miou:.4f}")
                self.save("final")
                self.run.complete()
        except CrossCbamError as exc:
            self.logger.error(f"Run {self.run.run_id} failed: {exc}")
            self.run.fail(str(exc))
            raise
        finally:
            bar.close()
        return self.run


__all__ = ["Trainer", "build_datasets"]
