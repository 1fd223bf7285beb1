"""Allow running as: python -m stowave"""
from .cli import main
main()
