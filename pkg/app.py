import logging
import os

from flask import Flask, jsonify
from flask_cors import CORS

from cli import empty_space, estimate, experiment, select_range, simulate
from config import Config
from models import db
from routes.estimate_routes import estimate_bp
from routes.experiment_routes import experiment_bp


def create_app(config_object=Config):
    app = Flask(__name__)
    app.config.from_object(config_object)
    logging.basicConfig(level=app.config["LOG_LEVEL"].upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    CORS(app,
         resources={r"/api/*": {"origins": app.config["CORS_ORIGINS"]}},
         allow_headers=["Content-Type"],
         methods=["GET", "POST", "OPTIONS"])
    db.init_app(app)

    app.register_blueprint(estimate_bp)
    app.register_blueprint(experiment_bp)
    for command in (simulate, estimate, select_range, experiment, empty_space):
        app.cli.add_command(command)

    @app.get("/api/health")
    def health():
        return jsonify({"status": "ok"})

    with app.app_context():
        db.create_all()

    return app


if __name__ == "__main__":
    app = create_app()
    debug_mode = os.environ.get("FLASK_ENV") == "development"
    port = int(os.environ.get("PORT", 5000))
    app.run(debug=debug_mode, port=port, host="0.0.0.0")
