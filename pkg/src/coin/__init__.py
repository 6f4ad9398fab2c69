"""Adversarial augmentation, signed-graph contrastive embedding and classification."""
