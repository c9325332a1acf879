from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv
load_dotenv()  # Load .env file if it exists
class Settings(BaseSettings):
    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_STREAM: str = "stderr"  # "stdout" or "stderr"

    # Filesystem
    DATA_DIR: str = "./data"
    OUTPUT_DIR: str = "./runs"

    # Execution
    WORKERS: int = 1
    DEFAULT_SEED: int = 0
    BATCH_SIZE: int = 128
    EVAL_BATCH_SIZE: int = 500

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="PAT_",
        extra="ignore",
    )

settings = Settings()
