from bgcosim.network import build_ieee33
from bgcosim import netfile


def load_network(params):
    if params.get("network", "ieee33") == "ieee33":
        return build_ieee33()
    return netfile.load_network(params["network"])
