from rest_framework import viewsets, filters
from rest_framework.decorators import action
from rest_framework.response import Response
from django_filters.rest_framework import DjangoFilterBackend
from .models import ExperimentRun, CheckResult
from .serializers import ExperimentRunSerializer, CheckResultSerializer


class ExperimentRunViewSet(viewsets.ReadOnlyModelViewSet):
    """API реестра запусков экспериментов"""
    queryset = ExperimentRun.objects.prefetch_related('checks')
    serializer_class = ExperimentRunSerializer
    filter_backends = [DjangoFilterBackend, filters.SearchFilter, filters.OrderingFilter]
    filterset_fields = ['name', 'status', 'config_hash']
    search_fields = ['name', 'output_dir']
    ordering_fields = ['created_at', 'wall_time']
    ordering = ['-created_at']

    @action(detail=True, methods=['get'])
    def manifest(self, request, pk=None):
        """Манифест запуска как словарь key=value"""
        run = self.get_object()
        items = {}
        for line in run.manifest.splitlines():
            key, sep, value = line.partition('=')
            if sep:
                items[key.strip()] = value.strip()
        return Response(items)


class CheckResultViewSet(viewsets.ReadOnlyModelViewSet):
    """API результатов проверок"""
    queryset = CheckResult.objects.select_related('run')
    serializer_class = CheckResultSerializer
    filter_backends = [DjangoFilterBackend, filters.OrderingFilter]
    filterset_fields = ['tag', 'passed', 'run', 'run__name']
    ordering = ['run', 'tag']
