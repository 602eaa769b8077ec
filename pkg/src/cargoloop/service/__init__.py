"""Supporting engineering: configuration, HTTP API, transcripts, CLI, and
the evaluation harness."""

from .config import ServiceConfig, load_config
from .evaluate import EvalResult, build_prompt_suite, parse_sweep, run_eval
from .transcripts import TranscriptWriter, read_transcript, replay
