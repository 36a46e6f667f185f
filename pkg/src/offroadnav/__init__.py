"""Instruction-constrained off-road navigation: directives, perception, MPC/MHE control and a simulator."""
