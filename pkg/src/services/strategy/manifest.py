"""
Run manifest models
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class StepReport(BaseModel):
    """Outcome of one strategy step"""
    name: str
    start: float
    end: float
    initial_error: Optional[float] = None
    terminal_error: Optional[float] = None
    relative_error: Optional[float] = None
    proxy: Optional[float] = None
    passed: bool = True
    skipped: bool = False
    message: str = ""
    norms: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _completed_steps_carry_errors(self) -> "StepReport":
        if not self.skipped and self.passed and self.terminal_error is None:
            raise ValueError(f"completed step {self.name} has no terminal error")
        return self


class RunManifest(BaseModel):
    """Per-step norms, step times, terminal errors, rate fits and written files"""
    command: str
    seed: Optional[int] = None
    times: Dict[str, float] = Field(default_factory=dict)
    steps: List[StepReport] = Field(default_factory=list)
    terminal_error: Optional[float] = None
    relative_error: Optional[float] = None
    success: bool = False
    failed_step: Optional[str] = None
    rates: List[Dict[str, Any]] = Field(default_factory=list)
    files: List[str] = Field(default_factory=list)
    config: Dict[str, Any] = Field(default_factory=dict)

    def add_step(self, report: StepReport) -> StepReport:
        self.steps.append(report)
        if not report.passed and self.failed_step is None:
            self.failed_step = report.name
        return report

    def step(self, name: str) -> Optional[StepReport]:
        return next((s for s in self.steps if s.name == name), None)

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: Path) -> "RunManifest":
        with open(path, "r", encoding="utf-8") as f:
            return cls.model_validate(json.load(f))
