"""
Run configuration shared by every command-line stage.

A config file is a flat JSON object whose keys are RunConfig fields; flags
given on the command line override file values.
"""
import dataclasses
import io
import json
import os
from dataclasses import dataclass
from typing import Optional

from biasing.encoder import ENCODING_MODES, EXTERNAL, PHONEME_EMBED_MODES
from biasing.errors import ConfigError
from biasing.optim import UPDATE_RULES

ALIGNMENT_MODES = ('em', 'soft')

# files each stage reads
STAGE_INPUTS = {
  'align-train': ('inventory', 'lexicon'),
  'align': ('inventory', 'lexicon', 'aligner_model'),
  'tokenize': ('vocab', 'biasing_list'),
  'build-trie': ('vocab', 'biasing_list'),
  'encode': ('inventory', 'lexicon', 'tree', 'params'),
  'train': ('inventory', 'lexicon', 'vocab', 'scenarios'),
  'simulate': ('inventory', 'lexicon', 'vocab', 'scenarios', 'params'),
  'score': ('ref', 'hyp'),
  'head-gradcheck': (),
  'demo': (),
}
STAGE_OUTPUTS = {
  'align-train': ('out',), 'align': ('out',), 'tokenize': (),
  'build-trie': ('out',), 'encode': ('out',), 'train': ('out',),
  'simulate': ('hyp',), 'score': (), 'head-gradcheck': (), 'demo': (),
}


@dataclass
class RunConfig:
  # paths
  inventory: Optional[str] = None
  lexicon: Optional[str] = None
  vocab: Optional[str] = None
  pretokenized: Optional[str] = None
  biasing_list: Optional[str] = None
  common_words: Optional[str] = None
  scenarios: Optional[str] = None
  confusion: Optional[str] = None
  aligner_model: Optional[str] = None
  alignments: Optional[str] = None
  soft_alignments: Optional[str] = None
  phoneme_table: Optional[str] = None
  tree: Optional[str] = None
  params: Optional[str] = None
  ref: Optional[str] = None
  hyp: Optional[str] = None
  json_report: Optional[str] = None
  out: Optional[str] = None
  out_dir: Optional[str] = None

  # dims
  d: int = 16
  d_enc: int = 16
  d_att: Optional[int] = None
  num_layers: int = 2

  # modes
  encoding: str = 'both'
  phoneme_embed: str = 'oh+'
  alignment: str = 'em'
  phoneme_query: bool = False
  include_root: bool = True
  tie_embed: bool = True
  tie_phoneme_proj: bool = False
  uppercase: bool = False

  # aligner
  max_g: int = 2
  max_p: int = 2
  em_iters: int = 50
  em_tol: float = 1e-6

  # training
  steps: int = 200
  lr: float = 0.05
  update_rule: str = 'adam'
  batch_size: Optional[int] = None
  reg: float = 0.0

  # decoding and scoring
  biasing: bool = True
  beam: int = 4
  max_symbols_per_frame: int = 2
  noise: float = 0.6
  top_k: Optional[int] = None
  n_distractors: int = 20

  # gradient check
  dims: str = 'V=20,N=10,d=8'
  instances: int = 20

  seed: int = 0

  def override(self, **flags):
    """Copy of this config with every non-None flag applied."""
    known = set(f.name for f in dataclasses.fields(self))
    unknown = [k for k in flags if k not in known]
    if unknown:
      raise ConfigError('unknown config keys: %s' % ', '.join(sorted(unknown)))
    return dataclasses.replace(self, **{k: v for k, v in flags.items() if v is not None})

  def as_dict(self):
    return dataclasses.asdict(self)

  def validate(self, stage):
    """Raise ConfigError unless this config can run ``stage``."""
    if stage not in STAGE_INPUTS:
      raise ConfigError('unknown stage %r' % stage)
    for name in STAGE_INPUTS[stage]:
      path = getattr(self, name)
      if path is None:
        raise ConfigError('%s needs --%s' % (stage, name.replace('_', '-')))
      if not os.path.isfile(path):
        raise ConfigError('%s: no such file %s' % (name, path))
    for name in STAGE_OUTPUTS[stage]:
      if getattr(self, name) is None:
        raise ConfigError('%s needs --%s' % (stage, name))
    if stage == 'demo' and self.out_dir is None:
      raise ConfigError('demo needs --out-dir')
    for name in ('d', 'd_enc', 'beam', 'max_symbols_per_frame', 'max_g', 'max_p',
                 'em_iters', 'instances'):
      if getattr(self, name) < 1:
        raise ConfigError('%s must be positive' % name)
    for name in ('d_att', 'batch_size'):
      if getattr(self, name) is not None and getattr(self, name) < 1:
        raise ConfigError('%s must be positive' % name)
    if self.num_layers < 0 or self.steps < 0:
      raise ConfigError('num_layers and steps must be non-negative')
    if self.lr < 0:
      raise ConfigError('lr must be non-negative')
    if not 0.0 <= self.noise < 1.0:
      raise ConfigError('noise must lie in [0, 1)')
    _check_mode('encoding', self.encoding, ENCODING_MODES)
    _check_mode('phoneme_embed', self.phoneme_embed, PHONEME_EMBED_MODES)
    _check_mode('alignment', self.alignment, ALIGNMENT_MODES)
    _check_mode('update_rule', self.update_rule, UPDATE_RULES)
    if self.phoneme_embed == EXTERNAL and self.phoneme_table is None and stage in (
        'encode', 'train', 'simulate', 'demo'):
      raise ConfigError('external phoneme embeddings need --phoneme-table')
    if self.alignment == 'soft' and self.soft_alignments is None and stage in (
        'encode', 'train', 'simulate'):
      raise ConfigError('soft alignment mode needs --soft-alignments')
    return self


def _check_mode(name, value, allowed):
  if value not in allowed:
    raise ConfigError('%s must be one of %s, got %r' % (name, ', '.join(allowed), value))


def load_config(path):
  """Read a flat JSON config; unknown keys raise ConfigError."""
  try:
    with io.open(path, 'r', encoding='utf-8') as f:
      obj = json.load(f)
  except (IOError, OSError, ValueError) as e:
    raise ConfigError('cannot read config %s: %s' % (path, e))
  if not isinstance(obj, dict):
    raise ConfigError('config %s is not a JSON object' % path)
  return RunConfig().override(**obj)
