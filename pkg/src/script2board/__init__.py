"""script2board: dialogue-script-to-storyboard pipeline with pluggable
generative backends and a built-in quality harness."""

__version__ = "0.1.0"
