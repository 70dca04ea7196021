from typing import Optional, Union


# Based on https://stackoverflow.com/a/1094933/
def sizeof_fmt(numBytes: Union[int, float], suffix: str = 'B') -> str:
    """Converts a number of bytes into a human-readable string with binary prefixes"""
    value = float(numBytes)
    # give bytes with zero decimals, everything else with one
    if abs(value) < 1024.0:
        return f"{value:3.0f} {suffix}"
    for unit in ['Ki', 'Mi', 'Gi', 'Ti', 'Pi']:
        value /= 1024.0
        # display 1023.95 KiB as 1.0 MiB, not as 1024.0 KiB, see https://stackoverflow.com/a/63839503/
        if abs(value) < 1024.0 - .05:
            return f"{value:3.1f} {unit}{suffix}"
    return f"{value:3.1f} Ei{suffix}"


def rate_fmt(bitsPerSecond: Union[int, float]) -> str:
    """Converts a rate in bit/s into a human-readable string with decimal prefixes"""
    value = float(bitsPerSecond)
    for unit in ['', 'k', 'M', 'G']:
        if abs(value) < 1000.0 - .005:
            return f"{value:.2f} {unit}bit/s"
        value /= 1000.0
    return f"{value:.2f} Tbit/s"


class RunStatistics:
    """Counters of one simulation run. Every run owns its own instance, so runs executed in parallel
    never share state."""
    INDENT = 4
    LABEL_WIDTH = 24

    def __init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        # RAN link
        self.rlc_accepted_segments = 0
        self.rlc_accepted_bytes = 0
        self.rlc_dropped_segments = 0
        self.rlc_dropped_bytes = 0
        self.rlc_delivered_bytes = 0
        self.channel_transitions = 0
        # proxy
        self.proxy_dropped_segments = 0
        self.proxy_duplicate_segments = 0
        self.proxy_reforwarded_bytes = 0
        self.proxy_forwarded_segments = 0
        self.upstream_acks = 0
        self.upstream_dup_acks = 0
        # end hosts
        self.sender_segments = 0
        self.sender_retransmissions = 0
        self.rtos = 0
        self.fast_retransmits = 0
        self.discarded_acks = 0
        self.persist_probes = 0
        self.udp_datagrams = 0

    @classmethod
    def rows(cls, data: list[Optional[tuple[str, str]]]) -> str:
        """Takes a list of tuples `(label, data)`, returns a formatted string skipping all `None` entries.
        The string is indented according to `RunStatistics.INDENT`, and the label is padded to the right
        if it is shorter than `RunStatistics.LABEL_WIDTH`."""
        def formatRow(row: tuple[str, str]) -> str:
            return (' ' * cls.INDENT) + (row[0] + ':').ljust(cls.LABEL_WIDTH, " ") + row[1]
        return '\n'.join([formatRow(row) for row in data if row is not None])

    def link_protocol(self) -> str:
        return self.rows([("RLC accepted", f"{self.rlc_accepted_segments} segments, {sizeof_fmt(self.rlc_accepted_bytes)}"),
                          ("RLC dropped", f"{self.rlc_dropped_segments} segments, {sizeof_fmt(self.rlc_dropped_bytes)}"),
                          ("RLC delivered", sizeof_fmt(self.rlc_delivered_bytes)),
                          ("Channel transitions", f"{self.channel_transitions}")])

    def proxy_protocol(self) -> str:
        return self.rows([("Proxy segments", f"{self.proxy_forwarded_segments} forwarded, "
                           f"{sizeof_fmt(self.proxy_reforwarded_bytes)} re-forwarded"),
                          ("Proxy drops", f"{self.proxy_dropped_segments} segments, {self.proxy_duplicate_segments} duplicates"),
                          ("Upstream ACKs", f"{self.upstream_acks} ({self.upstream_dup_acks} duplicates)")])

    def sender_protocol(self) -> str:
        return self.rows([("Sent", f"{self.sender_segments} segments, {self.sender_retransmissions} retransmissions"),
                          ("Loss recovery", f"{self.fast_retransmits} fast retransmits, {self.rtos} RTOs"),
                          (None if self.persist_probes == 0 else ("Persist probes", f"{self.persist_probes}")),
                          (None if self.discarded_acks == 0 else ("Discarded ACKs", f"{self.discarded_acks}")),
                          (None if self.udp_datagrams == 0 else ("UDP datagrams", f"{self.udp_datagrams}"))])

    def full_protocol(self, withProxy: bool = True) -> str:
        parts = [self.link_protocol(), self.proxy_protocol(), self.sender_protocol()]
        if not withProxy:
            parts.pop(1)
        return "\n\n".join(parts)
