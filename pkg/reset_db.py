from app import create_app
from models import db, ExperimentRun

app = create_app()

with app.app_context():
    runs = ExperimentRun.query.count()
    print(f"Dropping all tables ({runs} stored experiment runs)...")
    db.drop_all()
    print("Creating all tables...")
    db.create_all()
    print("Database reset successfully!")
