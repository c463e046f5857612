from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    output_dir: str = "./out"
    threads: int = 1
    log_level: str = "INFO"
    drop_empty_worlds: bool = False
    snapshot_stride: int = 100

    model_config = SettingsConfigDict(
        env_prefix="MUSICLAB_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    @property
    def output_dir_resolved(self) -> Path:
        """Get resolved output directory."""
        return Path(self.output_dir).expanduser().resolve()

    @property
    def worker_count(self) -> int:
        """Get the number of world workers, at least one."""
        return max(1, self.threads)


settings = Settings()
