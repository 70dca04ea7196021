import sys
import MilliProxySim.run_cli


if __name__ == '__main__':
    sys.exit(MilliProxySim.run_cli.run())
