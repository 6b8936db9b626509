"""
mmWave Pose Pipeline
Command-line entry point: simulate, process, pretrain, finetune, evaluate, report, lopo

Usage:
    python run_pipeline.py lopo --config configs/toy.json --modality rd --head heatmap --init pretrained
"""

import os
import sys
from pathlib import Path

# Add the service root for package imports
sys.path.insert(0, str(Path(__file__).parent))

import settings  # noqa: E402,F401  (reads .env before the log level below)
from pipeline.logging_setup import configure_logging  # noqa: E402
from pipeline.runner import run  # noqa: E402

configure_logging(os.getenv('MMWAVE_POSE_LOG_LEVEL', 'INFO'))


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
