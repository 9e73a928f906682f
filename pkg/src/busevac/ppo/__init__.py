"""Proximal policy optimisation with numpy-only gradients."""

from busevac.ppo.env import EvacEnv
from busevac.ppo.model import PolicyParams, init_params
from busevac.ppo.train import PpoConfig, PpoPolicy, load_checkpoint, save_checkpoint, train

__all__ = ["EvacEnv", "PolicyParams", "PpoConfig", "PpoPolicy", "init_params",
           "load_checkpoint", "save_checkpoint", "train"]
