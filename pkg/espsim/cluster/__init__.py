"""Provide imports for cluster sub-package."""

# Authors: The espsim developers
# License: AGPL

from .model import ModelConfig, kv_bytes_per_token, tokens_for_memory
from .request import Phase, Request, declared_output_bound
from .pool import KVCachePool, Locality, can_fit
from .group import Batch, ParallelGroup
from .state import ClusterState
