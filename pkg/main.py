#!/usr/bin/env python3
from ac_forecast.app import run

if __name__ == "__main__":
    run()
