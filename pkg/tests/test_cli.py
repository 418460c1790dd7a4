import json
import os

import pytest

from biasing.biastrie import load_tree
from biasing.cli import build_parser, config_from_args, main
from biasing.config import RunConfig, load_config
from biasing.errors import ConfigError
from biasing.g2p_align import load_alignments
from biasing.tokenizer import save_vocab

from tests.conftest import BRI_PHONEMES, BRI_PRONUNCIATIONS, write_lines


@pytest.fixture
def files(tmp_path, vocab):
  paths = {
    'inventory': write_lines(tmp_path / 'inv.txt', BRI_PHONEMES),
    'lexicon': write_lines(tmp_path / 'lex.tsv',
                           ['%s\t%s' % kv for kv in sorted(BRI_PRONUNCIATIONS.items())]),
    'list': write_lines(tmp_path / 'list.txt', ['BRIDAL', 'BRISKLY']),
    'vocab': str(tmp_path / 'vocab.txt'),
  }
  save_vocab(vocab, paths['vocab'])
  return paths


def test_no_command_is_a_usage_error(capsys):
  assert main([]) == 2
  assert main(['bogus']) == 2
  assert 'usage' in capsys.readouterr().err


def test_override_rejects_unknown_keys():
  with pytest.raises(ConfigError):
    RunConfig().override(depth=3)
  c = RunConfig().override(d=8, lexicon=None)
  assert c.d == 8 and c.lexicon is None


def test_config_file_and_flag_precedence(tmp_path):
  path = tmp_path / 'run.json'
  path.write_text(json.dumps({'d': 32, 'beam': 2}))
  args = build_parser().parse_args(['train', '--config', str(path), '--beam', '6'])
  config = config_from_args(args)
  assert (config.d, config.beam) == (32, 6)

  path.write_text(json.dumps({'width': 3}))
  with pytest.raises(ConfigError):
    load_config(str(path))
  assert main(['score', '--config', str(path)]) == 2


def test_mode_flag(tmp_path):
  parse = lambda *a: config_from_args(build_parser().parse_args(['encode'] + list(a)))
  assert parse('--mode', 'phoneme').encoding == 'phoneme'
  assert parse('--mode', 'oh').phoneme_embed == 'oh'
  assert parse('--phoneme-query', 'on').phoneme_query is True
  assert parse('--phoneme-query').phoneme_query is True
  assert parse('--phoneme-query', 'off').phoneme_query is False
  with pytest.raises(ConfigError):
    parse('--mode', 'spelling')
  assert main(['encode', '--mode', 'spelling']) == 2


def test_missing_lexicon_writes_nothing(tmp_path, files, capsys):
  out = tmp_path / 'out'
  code = main(['align-train', '--inventory', files['inventory'],
               '--lexicon', str(tmp_path / 'missing.tsv'), '--out', str(out / 'aligner.json')])
  assert code == 2
  assert not out.exists()
  assert 'missing.tsv' in capsys.readouterr().err


def test_missing_output_flag(files):
  assert main(['build-trie', '--vocab', files['vocab'], '--list', files['list']]) == 2


def test_runtime_error_exits_one(tmp_path, files):
  bad = write_lines(tmp_path / 'bad.txt', ['BRIDAL', 'ZEBRA'])
  code = main(['build-trie', '--vocab', files['vocab'], '--list', bad,
               '--out', str(tmp_path / 'tree.json')])
  assert code == 1


def test_tokenize_prints_segmentations(files, capsys):
  assert main(['tokenize', '--vocab', files['vocab'], '--list', files['list']]) == 0
  assert capsys.readouterr().out.splitlines() == ['BRIDAL\tB RI DAL_', 'BRISKLY\tB RI SKLY_']


def test_build_trie(tmp_path, files):
  out = str(tmp_path / 'tree.json')
  assert main(['build-trie', '--vocab', files['vocab'], '--list', files['list'],
               '--out', out]) == 0
  tree = load_tree(out)
  assert tree.N == 4
  assert os.path.isfile(out + '.manifest.json')


def test_align_train_then_align(tmp_path, files):
  model = str(tmp_path / 'aligner.json')
  aligned = str(tmp_path / 'aligned.json')
  common = ['--inventory', files['inventory'], '--lexicon', files['lexicon']]
  assert main(['align-train'] + common + ['--out', model, '--iters', '5',
                                          '--max-g', '1', '--max-p', '2']) == 0
  assert main(['align'] + common + ['--model', model, '--out', aligned]) == 0
  alignments = load_alignments(aligned)
  assert sorted(alignments) == ['BRIDAL', 'BRISKLY']
  assert alignments['BRIDAL'].shape == (6, 6)
  with open(model + '.manifest.json') as f:
    manifest = json.load(f)
  assert manifest['stage'] == 'align-train'
  assert 'lex.tsv' in manifest['inputs']
  assert set(manifest['versions']) >= {'numpy', 'scipy', 'python'}


def test_score(tmp_path, capsys):
  ref = write_lines(tmp_path / 'ref.txt', ['the BRIDAL day', 'a b'])
  hyp = write_lines(tmp_path / 'hyp.txt', ['the BRIDLE day', 'a b'])
  words = write_lines(tmp_path / 'list.txt', ['BRIDAL', 'BRIDLE'])
  report = str(tmp_path / 'report.json')
  assert main(['score', '--ref', ref, '--hyp', hyp, '--list', words, '--json', report]) == 0
  assert 'R-WER 100.00' in capsys.readouterr().out
  with open(report) as f:
    obj = json.load(f)
  assert obj['score']['wer']['substitutions'] == 1
  assert obj['score']['wer']['rate'] == pytest.approx(0.2)
  assert obj['score']['rwer']['rate'] == 1.0


def test_head_gradcheck_command(capsys):
  assert main(['head-gradcheck', '--dims', 'V=6,N=4,d=4', '--instances', '2']) == 0
  assert 'max relative gradient error' in capsys.readouterr().out
