from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="CODEDVAE_", env_file=".env", extra="ignore"
    )

    seed: int | None = None
    log_level: str = "INFO"
    output_dir: str = "runs"
    data_dir: str = "data"


settings = Settings()
