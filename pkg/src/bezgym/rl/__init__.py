"""Reinforcement-learning core: GAE, PPO and adversarial motion priors."""
