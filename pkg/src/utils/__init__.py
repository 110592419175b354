"""
Utility modules for the CDR veracity toolkit
"""

from .logger import setup_logger
from .file_handler import open_input, sha256_file, write_csv, write_json, StagedOutputs

__all__ = ['setup_logger', 'open_input', 'sha256_file', 'write_csv',
           'write_json', 'StagedOutputs']
