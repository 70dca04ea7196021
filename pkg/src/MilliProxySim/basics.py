from enum import Enum
from logging import Formatter
from typing import Final


# This exception should be raised if a serious problem with an experiment appears, but the code
# is working as intended. This is to differentiate experiment errors from programming errors.
class SimulationError(Exception):
    pass


class ConfigurationError(SimulationError):
    pass


class constants:
    LOG_FILENAME = 'log.txt'
    METADATA_FILENAME = 'sweep-metadata.json'
    RUNS_FILENAME = 'runs.csv'
    SUMMARY_FILENAME = 'summary.csv'
    GOODPUT_PLOT_FILENAME = 'goodput.dat'
    LATENCY_PLOT_FILENAME = 'latency.dat'
    LOGFORMAT = Formatter(fmt='%(levelname)-8s %(asctime)-8s.%(msecs)03d: %(message)s', datefmt='%H:%M:%S')


# binary megabyte, so that 10 MB == 10 * 2**20 bytes everywhere in the configuration
MB: Final[int] = 1024 * 1024
US_PER_MS: Final[int] = 1000
US_PER_S: Final[int] = 1_000_000


def ms_to_us(ms: float) -> int:
    return int(round(ms * US_PER_MS))


def s_to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_S))


def mb_to_bytes(mb: float) -> int:
    return int(round(mb * MB))


# from https://www.cosmicpython.com/blog/2020-10-27-i-hate-enums.html
class StrEnum(str, Enum):
    def __str__(self) -> str:
        """
        This assures `str(StrEnum(x)) == StrEnum(x).value`.
        """
        return str.__str__(self)


class TRANSPORT(StrEnum):
    NEWRENO = 'newreno'
    MILLIPROXY = 'newreno+milliproxy'
    UDP = 'udp'


class CHANNEL_LABEL(StrEnum):
    LOS = 'LOS'
    NLOS = 'NLOS'
    OUTAGE = 'OUTAGE'


class TCP_PHASE(StrEnum):
    SLOW_START = 'SlowStart'
    CONGESTION_AVOIDANCE = 'CongestionAvoidance'
    FAST_RECOVERY = 'FastRecovery'


class RATE_ESTIMATOR(StrEnum):
    FULL_BUFFER = 'full_buffer'     # AMC-style prediction, independent of the offered load
    MEASURED = 'measured'           # bytes actually served in the last period


# from logging._nameToLevel
class LOG_LEVEL(StrEnum):
    CRITICAL = 'CRITICAL'
    ERROR = 'ERROR'
    WARNING = 'WARNING'
    INFO = 'INFO'
    DEBUG = 'DEBUG'
