def __repr__(self):
    """Dump the class data in the format of a .netrc file."""
    rep = ""
    for host in self.hosts.keys():
        attrs = self.hosts[host]
        rep += f"machine {host}\n\tlogin {attrs[0]}\n"
        if attrs[1]:
            rep += f"\taccount {attrs[1]}\n"
        rep += f"\tpassword {attrs[2]}\n"
    for macro in self.macros.keys():
        rep += f"macdef {macro}\n"
        for line in self.macros[macro]:
            rep += line
        rep += "\n"
    return rep
