import os


class Config:
    SQLALCHEMY_DATABASE_URI = os.environ.get("DATABASE_URL", "sqlite:///gibbs_beta.db")
    SQLALCHEMY_TRACK_MODIFICATIONS = False
    CORS_ORIGINS = os.environ.get("CORS_ORIGINS", "http://localhost:5173,http://localhost:3000").split(",")
    LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")

    # Sampler: steps = SAMPLER_STEPS_PER_VOLUME * |window|, burn-in half of that
    SAMPLER_STEPS_PER_VOLUME = int(os.environ.get("SAMPLER_STEPS_PER_VOLUME", 100_000))
    SAMPLER_P_BIRTH = float(os.environ.get("SAMPLER_P_BIRTH", 0.5))

    # Quadrature spacing h = r_tilde / divisor
    V_SPACING_DIVISOR = float(os.environ.get("V_SPACING_DIVISOR", 20))
    W_SPACING_DIVISOR = float(os.environ.get("W_SPACING_DIVISOR", 10))
    AREA_GRID_DIVISOR = float(os.environ.get("AREA_GRID_DIVISOR", 64))

    BREAKPOINT_CANDIDATES = int(os.environ.get("BREAKPOINT_CANDIDATES", 200))
    DEFAULT_ALPHA = float(os.environ.get("DEFAULT_ALPHA", 0.05))
    DEFAULT_REPLICATIONS = int(os.environ.get("DEFAULT_REPLICATIONS", 200))
    DEFAULT_THREADS = int(os.environ.get("DEFAULT_THREADS", os.cpu_count() or 1))


class TestConfig(Config):
    SQLALCHEMY_DATABASE_URI = "sqlite:///:memory:"
    TESTING = True
