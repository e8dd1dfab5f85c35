"""Extending-window schedule of (train, validation, predict) ranges."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

from .errors import PlanError
from .panel import DateRange, add_months, month_index

SPLIT_COLUMNS = ("index", "train_start", "train_end", "val_start", "val_end",
                 "pred_start", "pred_end")


@dataclass(frozen=True)
class SplitIteration:
    index: int
    train: DateRange
    validation: DateRange
    predict: DateRange


@dataclass(frozen=True)
class SplitPlan:
    iterations: tuple[SplitIteration, ...]
    # a one-iteration table cannot reveal its step, so it is not part of equality
    step_months: int = field(default=12, compare=False)
    val_len_months: int = 119

    @property
    def test_range(self) -> DateRange:
        return DateRange(self.iterations[0].predict.start, self.iterations[-1].predict.end)

    def predict_months(self) -> list[str]:
        return self.test_range.months()

    def iteration_for(self, month: str) -> SplitIteration:
        for it in self.iterations:
            if month in it.predict:
                return it
        raise PlanError(f"month {month} is not predicted by any iteration")

    def truncate(self, test_end: str) -> "SplitPlan":
        """The plan that ``build_split_plan`` would produce for an earlier ``test_end``."""
        if month_index(test_end) < month_index(self.iterations[0].predict.start):
            raise PlanError(f"test end {test_end} precedes the first predicted month")
        kept = []
        for it in self.iterations:
            if month_index(it.predict.start) > month_index(test_end):
                break
            end = min(it.predict.end, test_end, key=month_index)
            kept.append(SplitIteration(it.index, it.train, it.validation,
                                       DateRange(it.predict.start, end)))
        return SplitPlan(tuple(kept), self.step_months, self.val_len_months)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SPLIT_COLUMNS)
        for it in self.iterations:
            w.writerow([it.index, it.train.start, it.train.end, it.validation.start,
                        it.validation.end, it.predict.start, it.predict.end])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "SplitPlan":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise PlanError(f"{path}: empty split plan")
        its = tuple(
            SplitIteration(int(r["index"]), DateRange(r["train_start"], r["train_end"]),
                           DateRange(r["val_start"], r["val_end"]),
                           DateRange(r["pred_start"], r["pred_end"]))
            for r in rows)
        step = (month_index(its[1].train.end) - month_index(its[0].train.end)
                if len(its) > 1 else len(its[0].predict))
        return cls(its, step, len(its[0].validation))


def build_split_plan(train_start: str, initial_train_end: str, val_len: int,
                     step: int, test_end: str) -> SplitPlan:
    """Grow the training window by ``step`` months per iteration.

    The validation window keeps ``val_len`` months and slides with the
    training end; the last prediction window is cut at ``test_end``.
    """
    if val_len < 1 or step < 1:
        raise PlanError("val_len and step must be positive")
    if month_index(initial_train_end) <= month_index(train_start):
        raise PlanError("initial_train_end must come after train_start")
    first_pred = add_months(initial_train_end, val_len + 1)
    if month_index(test_end) < month_index(first_pred):
        raise PlanError(f"test range shorter than one month: first predicted month "
                        f"{first_pred}, test end {test_end}")

    iterations = []
    train_end = initial_train_end
    while True:
        val = DateRange(add_months(train_end, 1), add_months(train_end, val_len))
        pred_start = add_months(val.end, 1)
        if month_index(pred_start) > month_index(test_end):
            break
        pred_end = min(add_months(pred_start, step - 1), test_end, key=month_index)
        iterations.append(SplitIteration(len(iterations) + 1, DateRange(train_start, train_end),
                                         val, DateRange(pred_start, pred_end)))
        train_end = add_months(train_end, step)
    return SplitPlan(tuple(iterations), step, val_len)
