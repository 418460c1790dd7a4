"""
Command-line entry point: one subcommand per pipeline stage.

  tcpgen-bias demo --out-dir run/ --seed 0
  tcpgen-bias score --ref ref.txt --hyp hyp.txt --list list.txt --json report.json
"""
import argparse
import logging
import sys

from biasing import pipeline
from biasing.biastrie import save_tree
from biasing.config import RunConfig, load_config
from biasing.data_utils import save_params, write_manifest
from biasing.encoder import ENCODING_MODES, PHONEME_EMBED_MODES
from biasing.errors import BiasingError, ConfigError
from biasing.g2p_align import align_lexicon, load_model, save_alignments, save_model
from biasing.gradient_check import ABS_FLOOR
from biasing.metrics import format_rate, score_corpus, write_report
from biasing.simdecoder import load_scenarios
from biasing.tokenizer import save_segmentations

logger = logging.getLogger(__name__)

STAGES = ('align-train', 'align', 'tokenize', 'build-trie', 'encode', 'train',
          'simulate', 'score', 'head-gradcheck', 'demo')
GRADCHECK_TOL = 1e-4
# parsed arguments that are not RunConfig fields
NOT_CONFIG = ('command', 'config', 'verbose', 'mode')


def _on_off(value):
  if value not in ('on', 'off'):
    raise argparse.ArgumentTypeError('expected on or off, got %r' % value)
  return value == 'on'


def _common_flags():
  p = argparse.ArgumentParser(add_help=False)
  p.add_argument('--config', help='flat JSON config; flags override its values')
  p.add_argument('-v', '--verbose', action='count', default=0)
  p.add_argument('--seed', type=int)

  files = p.add_argument_group('files')
  files.add_argument('--inventory')
  files.add_argument('--lexicon')
  files.add_argument('--vocab')
  files.add_argument('--pretokenized')
  files.add_argument('--list', '--words', dest='biasing_list')
  files.add_argument('--common-words', dest='common_words')
  files.add_argument('--scenarios')
  files.add_argument('--confusion')
  files.add_argument('--model', dest='aligner_model')
  files.add_argument('--alignments')
  files.add_argument('--soft-alignments', dest='soft_alignments')
  files.add_argument('--phoneme-table', dest='phoneme_table')
  files.add_argument('--tree')
  files.add_argument('--params')
  files.add_argument('--ref')
  files.add_argument('--hyp')
  files.add_argument('--json', dest='json_report')
  files.add_argument('--out')
  files.add_argument('--out-dir', dest='out_dir')

  model = p.add_argument_group('model')
  model.add_argument('--d', type=int)
  model.add_argument('--d-enc', dest='d_enc', type=int)
  model.add_argument('--d-att', dest='d_att', type=int)
  model.add_argument('--layers', dest='num_layers', type=int)
  model.add_argument('--mode', help='encoding (%s) or phoneme embedding (%s)'
                     % ('|'.join(ENCODING_MODES), '|'.join(PHONEME_EMBED_MODES)))
  model.add_argument('--encoding', choices=ENCODING_MODES)
  model.add_argument('--phoneme-embed', dest='phoneme_embed', choices=PHONEME_EMBED_MODES)
  model.add_argument('--alignment', choices=('em', 'soft'))
  model.add_argument('--phoneme-query', dest='phoneme_query', type=_on_off, nargs='?',
                     const=True)
  model.add_argument('--no-root', dest='include_root', action='store_const', const=False)
  model.add_argument('--untie-embed', dest='tie_embed', action='store_const', const=False)
  model.add_argument('--tie-phoneme-proj', dest='tie_phoneme_proj', action='store_const',
                     const=True)
  model.add_argument('--uppercase', action='store_const', const=True)

  align = p.add_argument_group('aligner')
  align.add_argument('--max-g', dest='max_g', type=int)
  align.add_argument('--max-p', dest='max_p', type=int)
  align.add_argument('--iters', dest='em_iters', type=int)
  align.add_argument('--tol', dest='em_tol', type=float)

  train = p.add_argument_group('training and decoding')
  train.add_argument('--steps', type=int)
  train.add_argument('--lr', type=float)
  train.add_argument('--update-rule', dest='update_rule')
  train.add_argument('--batch-size', dest='batch_size', type=int)
  train.add_argument('--reg', type=float)
  train.add_argument('--no-bias', dest='biasing', action='store_const', const=False)
  train.add_argument('--beam', type=int)
  train.add_argument('--max-symbols', dest='max_symbols_per_frame', type=int)
  train.add_argument('--noise', type=float)
  train.add_argument('--top-k', dest='top_k', type=int)
  train.add_argument('--distractors', dest='n_distractors', type=int)
  train.add_argument('--dims', help='gradient check sizes, e.g. "V=20,N=10,d=8"')
  train.add_argument('--instances', type=int)
  return p


def build_parser():
  parser = argparse.ArgumentParser(
    prog='tcpgen-bias', description='Tree-constrained pointer-generator biasing toolkit')
  sub = parser.add_subparsers(dest='command')
  common = _common_flags()
  for stage in STAGES:
    sub.add_parser(stage, parents=[common])
  return parser


def config_from_args(args):
  config = load_config(args.config) if args.config else RunConfig()
  flags = {k: v for k, v in vars(args).items() if k not in NOT_CONFIG}
  if args.mode is not None:
    if args.mode in ENCODING_MODES:
      flags['encoding'] = args.mode
    elif args.mode in PHONEME_EMBED_MODES:
      flags['phoneme_embed'] = args.mode
    else:
      raise ConfigError('unknown --mode %r' % args.mode)
  return config.override(**flags)


def _manifest(config, stage, outputs):
  inputs = [getattr(config, name) for name in (
    'inventory', 'lexicon', 'vocab', 'pretokenized', 'biasing_list', 'scenarios',
    'confusion', 'aligner_model', 'alignments', 'soft_alignments', 'phoneme_table',
    'tree', 'params', 'ref', 'hyp')]
  for out in outputs:
    write_manifest(out, stage, inputs=inputs, outputs=[out], config=config.as_dict(),
                   seed=config.seed)


def _align_train(config):
  inv, lexicon, _ = pipeline.load_world(config)
  model = pipeline.train_aligner(config, lexicon)
  save_model(model, inv, config.out)
  return [config.out]


def _align(config):
  inv, lexicon, _ = pipeline.load_world(config)
  words = pipeline.read_words(config.biasing_list) if config.biasing_list else None
  save_alignments(align_lexicon(load_model(config.aligner_model, inv), lexicon, words),
                  config.out)
  return [config.out]


def _tokenize(config):
  vocab = pipeline.load_vocab(config.vocab)
  words = pipeline.read_words(config.biasing_list)
  segs = pipeline.segmentations_for(words, vocab, config)
  if config.out:
    save_segmentations(vocab, segs, config.out)
    return [config.out]
  for w in words:
    print('%s\t%s' % (w, ' '.join(vocab.id_to_piece[i] for i in segs[w].piece_ids)))
  return []


def _build_trie(config):
  vocab = pipeline.load_vocab(config.vocab)
  tree = pipeline.tree_for_words(pipeline.read_words(config.biasing_list), vocab, config)
  save_tree(tree, config.out, vocab)
  logger.info('tree over %d words has %d nodes', len(tree.words), tree.N)
  return [config.out]


def _encode(config):
  model = pipeline.model_from_params(config.params)
  config = pipeline.config_for_model(config, model)
  inv, lexicon, _ = pipeline.load_world(config)
  tree = pipeline.load_tree(config.tree)
  features = None
  if config.encoding != 'grapheme':
    alignments = pipeline.char_phone_alignments(config, inv, lexicon)
    table = pipeline.phoneme_table(inv, config.phoneme_embed, config.phoneme_table)
    features = pipeline.tree_features(tree, lexicon, alignments, table, config.encoding)
  save_params({'H': model.encode(tree, features)}, config.out,
              meta={'N': tree.N, 'd': model.dims['d']})
  return [config.out]


def _train(config):
  session = pipeline.prepare_session(config)
  model, history = pipeline.train_on_session(config, session)
  pipeline.save_model_params(model, config.out)
  if history:
    print('final loss %.6f after %d steps' % (history[-1], len(history)))
  return [config.out]


def _simulate(config):
  model = pipeline.model_from_params(config.params)
  config = pipeline.config_for_model(config, model)
  session = pipeline.prepare_session(config)
  hyps = pipeline.decode_session(config, session, model)
  pipeline.write_sentences(hyps, config.hyp)
  outputs = [config.hyp]
  if config.ref:
    pipeline.write_sentences([list(s.words) for s in session.scenarios], config.ref)
    outputs.append(config.ref)
  return outputs


def _score(config):
  refs = pipeline.read_sentences(config.ref)
  hyps = pipeline.read_sentences(config.hyp)
  if config.scenarios:
    lists = [set(s.biasing_words) for s in load_scenarios(config.scenarios)]
  elif config.biasing_list:
    lists = set(pipeline.read_words(config.biasing_list))
  else:
    lists = set()
  score = score_corpus(refs, hyps, lists)
  print('WER %s  R-WER %s' % (format_rate(score.wer), format_rate(score.rwer)))
  if config.json_report:
    write_report({'score': score}, config.json_report)
    return [config.json_report]
  return []


def _head_gradcheck(config):
  dims = pipeline.parse_dims(config.dims)
  worst = pipeline.head_gradcheck(seed=config.seed, V=dims.get('V', 20),
                                  N=dims.get('N', 10), d=dims.get('d', 8),
                                  instances=config.instances)
  print('max relative gradient error %.3e' % worst)
  if worst > GRADCHECK_TOL:
    raise BiasingError('gradient error %.3e above %g (absolute floor %g)'
                       % (worst, GRADCHECK_TOL, ABS_FLOOR))
  return []


def _demo(config):
  result = pipeline.run_demo(config)
  print(pipeline.format_comparison(result))
  return []


RUNNERS = {
  'align-train': _align_train, 'align': _align, 'tokenize': _tokenize,
  'build-trie': _build_trie, 'encode': _encode, 'train': _train,
  'simulate': _simulate, 'score': _score, 'head-gradcheck': _head_gradcheck,
  'demo': _demo,
}


def run_pipeline(config, stage):
  """
  Validate config for one stage, run it and write a manifest beside every
  output. Returns the list of output paths.
  """
  config.validate(stage)
  outputs = RUNNERS[stage](config)
  _manifest(config, stage, outputs)
  return outputs


def main(argv=None):
  parser = build_parser()
  try:
    args = parser.parse_args(argv)
  except SystemExit as e:
    return e.code
  if not args.command:
    parser.print_usage(sys.stderr)
    return 2

  level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
  logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')

  try:
    run_pipeline(config_from_args(args), args.command)
  except ConfigError as e:
    sys.stderr.write('tcpgen-bias %s: %s\n' % (args.command, e))
    return 2
  except (BiasingError, ValueError, KeyError, IOError, OSError) as e:
    sys.stderr.write('tcpgen-bias %s: %s\n' % (args.command, e))
    return 1
  return 0


if __name__ == '__main__':
  sys.exit(main())
