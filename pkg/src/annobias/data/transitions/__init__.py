"""Published class-confusion matrices shipped as JSON fixtures."""
