"""Communicating Quantum Processes: syntax, linear types and probabilistic execution."""
from .ast import Program, Proc, alpha_equal, free_names, substitute
from .parser import ParseError, parse_expr, parse_proc, parse_program, print_program
from .quantum import QState, apply_unitary, builtin_gate, measure
from .semantics import Configuration, explore, initial_configuration, proc_steps, sample
from .typecheck import CqpTypeError, check_internal, check_proc, check_program

__all__ = [
    "Configuration",
    "CqpTypeError",
    "ParseError",
    "Proc",
    "Program",
    "QState",
    "alpha_equal",
    "apply_unitary",
    "builtin_gate",
    "check_internal",
    "check_proc",
    "check_program",
    "explore",
    "free_names",
    "initial_configuration",
    "measure",
    "parse_expr",
    "parse_proc",
    "parse_program",
    "print_program",
    "proc_steps",
    "sample",
    "substitute",
]
__version__ = "0.1.0"
