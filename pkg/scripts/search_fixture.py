"""Regenerate the shipped fixture that satisfies every theorem hypothesis.

Usage: python3 scripts/search_fixture.py [--out PATH]
"""
from ksdl.fixture_search import main

if __name__ == "__main__":
    main()
