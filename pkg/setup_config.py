#!/usr/bin/env python3
"""
Configuration Setup Script for the Boussinesq Control Lab
"""
import json
import sys
from dataclasses import asdict
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent / "src"))

from services.config import LabConfig  # noqa: E402


def ask(prompt, default, cast=str):
    """Read a value, keeping the default on empty input"""
    raw = input(f"{prompt} [{default}]: ").strip()
    if not raw:
        return default
    try:
        return cast(raw)
    except ValueError:
        print(f"⚠️ Invalid value {raw!r}, keeping {default}")
        return default


def ask_list(prompt, default):
    raw = input(f"{prompt} [{', '.join(str(v) for v in default)}]: ").strip()
    if not raw:
        return default
    try:
        return [float(v) for v in raw.replace(",", " ").split()]
    except ValueError:
        print(f"⚠️ Invalid list {raw!r}, keeping the default")
        return default


def create_config():
    """Create configuration file interactively"""
    print("🌊 Boussinesq Control Lab - Configuration Setup")
    print("=" * 50)

    config = asdict(LabConfig.default())
    config["_comments"] = {
        "description": "Boussinesq控制实验室配置文件",
        "version": "1.0.0",
    }

    # Grid
    print("\n📐 Grid Configuration:")
    config["grid"]["nx"] = ask("Cells in x", config["grid"]["nx"], int)
    config["grid"]["ny"] = ask("Cells in y", config["grid"]["ny"], int)
    config["grid"]["lx"] = ask("Box length", config["grid"]["lx"], float)
    # the control region follows the grid
    config["grid"]["control_region"] = None
    config["grid"] = asdict(LabConfig.from_dict({"grid": config["grid"]}).grid)

    # Solver
    print("\n⏱️ Solver Configuration:")
    config["solver"]["dt"] = ask("Time step", config["solver"]["dt"], float)
    config["solver"]["friction"] = ask("Navier friction", config["solver"]["friction"], float)
    config["solver"]["heat_transfer"] = ask("Robin heat transfer", config["solver"]["heat_transfer"], float)

    # Strategy
    print("\n🎯 Strategy Configuration:")
    config["strategy"]["horizon"] = ask("Control horizon T", config["strategy"]["horizon"], float)
    config["strategy"]["epsilon"] = ask("Tracking eps", config["strategy"]["epsilon"], float)
    config["strategy"]["delta"] = ask("Local radius delta", config["strategy"]["delta"], float)
    config["strategy"]["target"] = ask("Target (zero/smooth)", config["strategy"]["target"])
    config["strategy"]["initial"] = ask("Initial data (zero/random)", config["strategy"]["initial"])
    config["strategy"]["seed"] = ask("Random seed", config["strategy"]["seed"], int)

    # Sweeps
    print("\n📈 Sweep Configuration:")
    config["expansion"]["mode"] = ask("Expansion mode (slip/friction)", config["expansion"]["mode"])
    config["expansion"]["epsilons"] = ask_list("Sweep eps values", config["expansion"]["epsilons"])

    # Local control
    print("\n🧮 Local Control Configuration:")
    config["hum"]["nonlinearity"] = ask("Boundary nonlinearity (none/linear/cubic)", config["hum"]["nonlinearity"])
    config["hum"]["penalty"] = ask("HUM penalty", config["hum"]["penalty"], float)

    config["storage"]["data_dir"] = ask("\n💾 Output directory", config["storage"]["data_dir"])
    return config


def save_config(config, filename="config.json"):
    """Save configuration to file"""
    try:
        with open(filename, 'w', encoding='utf-8') as f:
            json.dump(config, f, indent=2, ensure_ascii=False)
        print(f"\n✅ Configuration saved to {filename}")
        return True
    except Exception as e:
        print(f"\n❌ Failed to save configuration: {e}")
        return False


def main():
    """Main setup function"""
    try:
        # Check if config already exists
        if Path("config.json").exists():
            overwrite = input("config.json already exists. Overwrite? (y/n): ").lower()
            if overwrite != 'y':
                print("Setup cancelled.")
                return

        # Create configuration
        config = create_config()

        # Save configuration
        if save_config(config):
            print("\n🎉 Configuration setup completed!")
            print("\nNext steps:")
            print("1. Review your config.json file")
            print("2. Run the tests: pytest")
            print("3. Start a run: python run_lab.py strategy --out data/strategy")
        else:
            print("\n❌ Configuration setup failed!")
            sys.exit(1)

    except KeyboardInterrupt:
        print("\n\nSetup cancelled by user.")
        sys.exit(1)
    except Exception as e:
        print(f"\n❌ Setup failed: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
