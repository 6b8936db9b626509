import io
import json
import logging
import os
import sys
import tempfile
import unittest
from pathlib import Path

import pytest

# Add the service root to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
sys.path.insert(0, os.path.dirname(__file__))

from dataset.container import read_dataset, read_manifest
from dataset.lopo import LeakageError
from evaluation.reports import FoldReport, write_fold_report
from evaluation.statistics import DegenerateSampleError
from pipeline.errors import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, error_record, exit_code_for, report_error
from pipeline.experiment_config import (
    RESOLVED_CONFIG_NAME,
    ExperimentConfig,
    config_from_dict,
    load_experiment_config,
    merge,
    parse_overrides,
)
from pipeline.logging_setup import RUN_LOG_NAME, attach_run_log, detach_run_log
from pipeline.runner import METRICS_NAME, run
from settings import ConfigError, load_settings
from synthetic_data import TINY_CONFIG
from training.trainer import NumericFailureError


def last_json_line(text: str) -> dict:
    return json.loads(text.strip().splitlines()[-1])


def only_run_dir(output_dir) -> Path:
    run_dirs = [p for p in Path(output_dir).iterdir() if p.is_dir()]
    assert len(run_dirs) == 1, run_dirs
    return run_dirs[0]


class TestExperimentConfig(unittest.TestCase):
    """Config file loading, overrides, synchronization and hashing"""

    def test_defaults_are_consistent(self):
        cfg = load_experiment_config()
        self.assertEqual(cfg.seed, 42)
        self.assertEqual(cfg.model.n_frames, cfg.dsp.n_frames)
        self.assertEqual(cfg.method_name, 'rd-heatmap-random')

    def test_file_values_and_tuple_coercion(self):
        cfg = load_experiment_config(TINY_CONFIG)
        self.assertEqual(cfg.seed, 7)
        self.assertEqual(cfg.model.patch, (2, 8, 8))
        self.assertEqual(cfg.model.embed_dim, 32)
        self.assertEqual(cfg.data.n_persons, 3)

    def test_precedence(self):
        """defaults < file < --set overrides < dedicated flags"""
        cfg = load_experiment_config(TINY_CONFIG, ['seed=5', 'model.embed_dim=64'], {'seed': 3})
        self.assertEqual(cfg.seed, 3)
        self.assertEqual(cfg.model.embed_dim, 64)
        self.assertEqual(cfg.pretrain.seed, 3)
        self.assertEqual(cfg.finetune.seed, 3)

    def test_synchronize_derives_model_fields(self):
        cfg = load_experiment_config(TINY_CONFIG, flags={'data': {'modality': 'dual'},
                                                         'finetune': {'head': 'gcn'}})
        self.assertTrue(cfg.model.dual_stream)
        self.assertEqual(cfg.model.head, 'gcn')
        self.assertEqual(cfg.method_name, 'dual-gcn-pretrained')

    def test_schema_errors(self):
        with self.assertRaises(ConfigError):
            merge(ExperimentConfig(), {'model': {'embed_dim': 'big'}})
        with self.assertRaises(ConfigError):
            merge(ExperimentConfig(), {'model': {'colour': 'red'}})
        with self.assertRaises(ConfigError):
            merge(ExperimentConfig(), {'data': {'modality': 'doppler'}})
        with self.assertRaises(ConfigError):
            merge(ExperimentConfig(), {'optimizer': {}})

    def test_cross_section_checks(self):
        with self.assertRaises(ConfigError):
            load_experiment_config(TINY_CONFIG, ['scene.n_frames=12'])
        with self.assertRaises(ConfigError):
            load_experiment_config(TINY_CONFIG, ['lopo.test_persons=[5]'])
        with self.assertRaises(ConfigError):
            load_experiment_config('/nonexistent/config.json')

    def test_parse_overrides(self):
        self.assertEqual(parse_overrides(['data.modality=ra', 'seed=9', 'model.patch=[2,4,4]']),
                         {'data': {'modality': 'ra'}, 'seed': 9, 'model': {'patch': [2, 4, 4]}})
        with self.assertRaises(ConfigError):
            parse_overrides(['seed'])
        with self.assertRaises(ConfigError):
            parse_overrides(['a.b.c=1'])

    def test_hash_and_round_trip(self):
        cfg = load_experiment_config(TINY_CONFIG)
        again = load_experiment_config(TINY_CONFIG)
        reseeded = load_experiment_config(TINY_CONFIG, flags={'seed': 8})

        self.assertEqual(cfg.config_hash(), again.config_hash())
        self.assertNotEqual(cfg.config_hash(), reseeded.config_hash())
        self.assertEqual(len(cfg.config_hash()), 12)
        self.assertTrue(cfg.run_dir_name().endswith('_seed7'))

        with tempfile.TemporaryDirectory() as d:
            path = cfg.write_resolved(d)
            self.assertEqual(path.name, RESOLVED_CONFIG_NAME)
            with open(path) as f:
                restored = config_from_dict(json.load(f))
        self.assertEqual(restored.config_hash(), cfg.config_hash())

    def test_invocation_inputs_change_the_hash(self):
        """Same config, different checkpoints or interference: different run directories"""
        def evaluate_with(checkpoint):
            return load_experiment_config(TINY_CONFIG, flags={
                'invocation': {'command': 'evaluate', 'inputs': {'checkpoint': checkpoint, 'fold': 0}}})

        first = evaluate_with('runs/a/fold_00/finetune_checkpoint')
        second = evaluate_with('runs/b/fold_00/finetune_checkpoint')
        self.assertNotEqual(first.run_dir_name(), second.run_dir_name())
        self.assertEqual(first.invocation.inputs['fold'], 0)

        clean = load_experiment_config(TINY_CONFIG, flags={'invocation': {'command': 'simulate'}})
        noisy = load_experiment_config(TINY_CONFIG, flags={'data': {'interference': True},
                                                           'invocation': {'command': 'simulate'}})
        self.assertNotEqual(clean.config_hash(), noisy.config_hash())
        self.assertEqual(config_from_dict(noisy.to_dict()).config_hash(), noisy.config_hash())

    def test_interference_flag_is_simulate_only(self):
        with self.assertRaises(ConfigError):
            load_experiment_config(TINY_CONFIG, flags={'data': {'interference': True},
                                                       'invocation': {'command': 'lopo'}})
        with self.assertRaises(ConfigError):
            load_experiment_config(TINY_CONFIG, flags={'invocation': {'command': 'train'}})


def test_exit_code_mapping():
    print("\n✓ Test: error kinds map onto CLI exit codes")

    assert exit_code_for(ConfigError('x')) == EXIT_CONFIG == 2
    assert exit_code_for(LeakageError('x')) == EXIT_DATA == 3
    assert exit_code_for(NumericFailureError('x')) == EXIT_NUMERIC == 4
    assert exit_code_for(DegenerateSampleError('x')) == EXIT_NUMERIC
    assert exit_code_for(ValueError('x')) is None

    record = json.loads(error_record(LeakageError("person 2\nin training"), 3))
    assert record == {'status': 'error', 'error_type': 'LeakageError',
                      'message': 'person 2 in training', 'exit_code': 3}

    stream = io.StringIO()
    assert report_error(ConfigError('bad'), stream) == 2
    assert json.loads(stream.getvalue())['error_type'] == 'ConfigError'
    with pytest.raises(ValueError):
        report_error(ValueError('unexpected'), io.StringIO())


def test_settings_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv('MMWAVE_POSE_WORKERS', '3')
    monkeypatch.setenv('MMWAVE_POSE_LOG_LEVEL', 'debug')
    settings = load_settings(str(tmp_path))
    assert settings.workers == 3
    assert settings.uses_worker_pool
    assert settings.log_level == 'DEBUG'
    assert settings.output_dir == tmp_path

    monkeypatch.setenv('MMWAVE_POSE_WORKERS', 'many')
    with pytest.raises(ConfigError):
        load_settings()
    monkeypatch.setenv('MMWAVE_POSE_WORKERS', '0')
    with pytest.raises(ConfigError):
        load_settings()


def test_run_log_is_json_lines(tmp_path):
    root = logging.getLogger()
    previous = root.level
    root.setLevel(logging.INFO)
    handler = attach_run_log(tmp_path)
    try:
        logging.getLogger('pipeline.test').info("fold finished", extra={'fold': 3, 'mpjpe_m': 0.07})
    finally:
        detach_run_log(handler)
        root.setLevel(previous)

    lines = (tmp_path / RUN_LOG_NAME).read_text().strip().splitlines()
    record = json.loads(lines[-1])
    assert record['message'] == "fold finished"
    assert record['level'] == 'INFO'
    assert record['logger'] == 'pipeline.test'
    assert record['fold'] == 3
    assert record['mpjpe_m'] == 0.07


class TestCommandLine:
    """Exit codes and error records of the run() entry point"""

    def test_usage_error_exits_with_config_code(self, capsys, tmp_path):
        assert run(['lopo', '--modality', 'doppler', '--output-dir', str(tmp_path)]) == 2
        record = last_json_line(capsys.readouterr().err)
        assert record['status'] == 'error'
        assert record['error_type'] == 'ConfigError'
        assert record['exit_code'] == 2

    def test_invalid_override_exits_with_config_code(self, capsys, tmp_path):
        code = run(['lopo', '--config', TINY_CONFIG, '--set', 'model.embed_dim=abc',
                    '--output-dir', str(tmp_path)])
        assert code == 2
        assert 'model.embed_dim' in last_json_line(capsys.readouterr().err)['message']

    def test_missing_checkpoint_exits_with_data_code(self, capsys, tmp_path):
        code = run(['evaluate', '--config', TINY_CONFIG, '--output-dir', str(tmp_path),
                    '--checkpoint', str(tmp_path / 'missing')])
        assert code == 3
        assert last_json_line(capsys.readouterr().err)['error_type'] == 'CheckpointError'

    def test_report_needs_two_methods(self, capsys, tmp_path):
        code = run(['report', '--output-dir', str(tmp_path), '--compare', f"A={tmp_path}"])
        assert code == 2


def write_method_reports(directory: Path, method: str, values):
    for person, value in enumerate(values):
        report = FoldReport(test_person=person, method=method, mpjpe_m=value, pck_05=0.5, n_clips=4,
                            per_action=[{'action_id': 0, 'mpjpe_m': value, 'pck_05': 0.5, 'n_clips': 4}])
        write_fold_report(report, directory / f"fold_{person:02d}")


def test_report_command_writes_tables(capsys, tmp_path):
    print("\n✓ Test: report compares fold reports of two methods")

    write_method_reports(tmp_path / 'a', 'A', [0.12, 0.10, 0.15, 0.11, 0.14, 0.13])
    write_method_reports(tmp_path / 'b', 'B', [0.131, 0.108, 0.16, 0.1215, 0.151, 0.139])
    output = tmp_path / 'runs'

    code = run(['report', '--output-dir', str(output),
                '--compare', f"A={tmp_path / 'a'}", '--compare', f"B={tmp_path / 'b'}"])
    assert code == 0
    assert last_json_line(capsys.readouterr().out)['status'] == 'ok'

    report_dir = only_run_dir(output) / 'report'
    with open(report_dir / 'stats_report.json') as f:
        payload = json.load(f)
    assert payload['methods'] == ['A', 'B']
    assert payload['n_folds'] == 6
    assert payload['friedman']['statistic'] == pytest.approx(6.0)
    assert payload['reference'] == 'A'
    assert (report_dir / 'results_table.csv').exists()
    assert (report_dir / 'results_table.md').read_text().startswith("# Method Comparison")

    print(f"  Friedman p = {payload['friedman']['p']:.4f}")


def test_simulate_then_process(capsys, tmp_path):
    print("\n✓ Test: simulate an IQ container and FFT it into RD/RA clips")

    small = ['--set', 'data.n_persons=2', '--set', 'data.n_actions=1', '--set', 'data.clips_per_pair=1']
    iq_manifest = tmp_path / 'iq' / 'manifest.json'
    clip_manifest = tmp_path / 'clips' / 'manifest.json'

    assert run(['simulate', '--config', TINY_CONFIG, *small, '--output-dir', str(tmp_path / 'runs'),
                '--output', str(iq_manifest)]) == 0
    iq = read_manifest(iq_manifest)
    assert iq.kind == 'iq'
    assert [r['clip_id'] for r in iq.records] == ['p00_a00_c00', 'p01_a00_c00']

    assert run(['process', '--config', TINY_CONFIG, *small, '--output-dir', str(tmp_path / 'runs'),
                '--input', str(iq_manifest), '--output', str(clip_manifest)]) == 0
    samples = read_dataset(clip_manifest)
    assert len(samples) == 2
    for sample in samples:
        assert set(sample.clips) == {'rd', 'ra'}
        assert sample.clips['rd'].frames.shape == (8, 16, 16)
        assert sample.labels.shape == (2, 13, 2)


def test_simulate_interference_gets_its_own_run_dir(capsys, tmp_path):
    print("\n✓ Test: clean and interference simulations write separate run directories")

    small = ['--set', 'data.n_persons=2', '--set', 'data.n_actions=1', '--set', 'data.clips_per_pair=1']
    output = tmp_path / 'runs'

    assert run(['simulate', '--config', TINY_CONFIG, *small, '--output-dir', str(output)]) == 0
    clean_dir = Path(last_json_line(capsys.readouterr().out)['run_dir'])
    assert run(['simulate', '--config', TINY_CONFIG, *small, '--output-dir', str(output), '--interference']) == 0
    noisy_dir = Path(last_json_line(capsys.readouterr().out)['run_dir'])

    assert clean_dir != noisy_dir
    assert sorted(p.name for p in output.iterdir()) == sorted([clean_dir.name, noisy_dir.name])

    for run_dir, interference in ((clean_dir, False), (noisy_dir, True)):
        manifest = read_manifest(run_dir / 'iq' / 'manifest.json')
        assert [r['interference'] for r in manifest.records] == [interference, interference]
        with open(run_dir / RESOLVED_CONFIG_NAME) as f:
            resolved = json.load(f)
        assert resolved['data']['interference'] is interference
        assert resolved['invocation']['command'] == 'simulate'


def test_process_writes_only_requested_stream(capsys, tmp_path):
    print("\n✓ Test: process --modality rd writes RD clips only")

    small = ['--set', 'data.n_persons=2', '--set', 'data.n_actions=1', '--set', 'data.clips_per_pair=1']
    iq_manifest = tmp_path / 'iq' / 'manifest.json'
    assert run(['simulate', '--config', TINY_CONFIG, *small, '--output-dir', str(tmp_path / 'runs'),
                '--output', str(iq_manifest)]) == 0

    assert run(['process', '--config', TINY_CONFIG, *small, '--output-dir', str(tmp_path / 'runs'),
                '--input', str(iq_manifest), '--modality', 'rd']) == 0
    run_dir = Path(last_json_line(capsys.readouterr().out)['run_dir'])

    clip_manifest = run_dir / 'dataset' / 'manifest.json'
    assert read_manifest(clip_manifest).modalities == ['rd']
    samples = read_dataset(clip_manifest)
    assert len(samples) == 2
    for sample in samples:
        assert set(sample.clips) == {'rd'}
        assert sample.labels.shape == (2, 13, 2)

    with open(run_dir / RESOLVED_CONFIG_NAME) as f:
        resolved = json.load(f)
    assert resolved['data']['modality'] == 'rd'
    assert resolved['invocation']['inputs'] == {'input': str(iq_manifest)}

    assert run(['process', '--config', TINY_CONFIG, *small, '--output-dir', str(tmp_path / 'runs'),
                '--input', str(iq_manifest), '--modality', 'ecg']) == EXIT_CONFIG


def test_tiny_lopo_is_reproducible(monkeypatch, tmp_path):
    print("\n✓ Test: two identical LOPO runs write identical metrics.json")

    monkeypatch.delenv('MMWAVE_POSE_WORKERS', raising=False)
    contents = []
    for attempt in ('first', 'second'):
        output = tmp_path / attempt
        assert run(['lopo', '--config', TINY_CONFIG, '--output-dir', str(output), '--folds', '0']) == 0
        run_dir = only_run_dir(output)
        contents.append((run_dir / METRICS_NAME).read_bytes())
        assert (run_dir / 'fold_00' / 'fold_report.json').exists()
        assert (run_dir / RESOLVED_CONFIG_NAME).exists()
        assert (run_dir / RUN_LOG_NAME).exists()

    assert contents[0] == contents[1]
    metrics = json.loads(contents[0])
    assert metrics['aggregate']['n_folds'] == 1
    assert metrics['folds'][0]['test_person'] == 0
    assert metrics['folds'][0]['n_clips'] == 4
    assert 0.0 <= metrics['aggregate']['pck_05']['mean'] <= 1.0

    print(f"  MPJPE {metrics['aggregate']['mpjpe_m']['mean']:.4f} m")


if __name__ == "__main__":
    print("=" * 60)
    print("PIPELINE AND CLI TESTS")
    print("=" * 60)
    pytest.main([__file__, '-v'])
